#pragma once

#include <map>
#include <string>
#include <vector>

#include "vcgsa/data_model.hpp"
#include "vcgsa/simulate.hpp"

namespace vcgsa {

// Counts TSV: header row of sample ids, first column gene id, integer cells.
CountMatrix read_counts_tsv(const std::string& path);

// Metadata TSV: columns sample_id, subject_id, time, then covariates.
std::vector<SampleInfo> read_meta_tsv(const std::string& path);

struct GmtResult {
  std::vector<GeneSet> sets; // resolved against gene ids, at least 2 matches
  std::vector<std::string> warnings;
};

// GMT: per line, set name, description, then tab-separated gene ids.
// Unmatched ids are reported; sets with fewer than 2 matches are skipped.
GmtResult read_gmt(const std::string& path,
                   const std::vector<std::string>& gene_ids);

// Benjamini-Hochberg step-up adjustment, clipped to 1.
std::vector<double> bh_adjust(const std::vector<double>& p);

// 10 significant digits; scientific notation below 1e-4.
std::string format_number(double x);

struct RunMeta {
  std::uint64_t seed = 0;
  std::map<std::string, std::string> flags;
  std::string timestamp; // RFC 3339; excluded from determinism comparisons
};

// TSV of one row per set plus a JSON sidecar (path + ".json") with the run
// metadata. p_raw is the permutation p-value when present, otherwise the
// asymptotic one.
void write_results(const std::vector<TestResult>& rows,
                   const std::string& path, const RunMeta& meta);

// Rejection-rate table from the simulation driver.
void write_study_csv(const std::vector<StudyRow>& rows,
                     const std::string& path);
std::string study_csv_text(const std::vector<StudyRow>& rows);

} // namespace vcgsa
