#include "vcgsa/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "vcgsa/errors.hpp"

namespace vcgsa {

namespace {

constexpr const char* kToolVersion = "1.0.0";

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  for (;;) {
    auto tab = line.find('\t', start);
    if (tab == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

// getline with the trailing carriage return of CRLF files removed.
bool next_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

double parse_double(const std::string& tok, const std::string& where) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw ValidationError(where + ": non-numeric value '" + tok + "'");
  }
  if (used != tok.size())
    throw ValidationError(where + ": non-numeric value '" + tok + "'");
  if (!std::isfinite(v))
    throw ValidationError(where + ": value must be finite");
  return v;
}

std::string line_tag(const std::string& path, std::size_t lineno) {
  return path + " line " + std::to_string(lineno);
}

} // namespace

CountMatrix read_counts_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open counts file " + path);

  std::string line;
  if (!next_line(in, line))
    throw ValidationError("counts file " + path + " is empty");
  auto header = split_tabs(line);
  if (header.size() < 2)
    throw ValidationError(line_tag(path, 1) +
                          ": header needs a gene id column and at least one "
                          "sample column");

  CountMatrix cm;
  cm.sample_ids.assign(header.begin() + 1, header.end());
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 1;
  while (next_line(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != header.size())
      throw ValidationError(line_tag(path, lineno) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
    cm.gene_ids.push_back(fields[0]);
    std::vector<double> row(fields.size() - 1);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      double v = parse_double(fields[c], line_tag(path, lineno));
      if (v < 0 || std::floor(v) != v)
        throw ValidationError(line_tag(path, lineno) +
                              ": counts must be non-negative integers");
      row[c - 1] = v;
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty())
    throw ValidationError("counts file " + path + " has no data rows");

  cm.counts.resize(static_cast<Eigen::Index>(rows.size()),
                   static_cast<Eigen::Index>(cm.sample_ids.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      cm.counts(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows[r][c];
  cm.validate();
  return cm;
}

std::vector<SampleInfo> read_meta_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open metadata file " + path);

  std::string line;
  if (!next_line(in, line))
    throw ValidationError("metadata file " + path + " is empty");
  auto header = split_tabs(line);
  if (header.size() < 3 || header[0] != "sample_id" ||
      header[1] != "subject_id" || header[2] != "time")
    throw ValidationError(
        line_tag(path, 1) +
        ": header must start with sample_id, subject_id, time");

  std::vector<SampleInfo> meta;
  std::size_t lineno = 1;
  while (next_line(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != header.size())
      throw ValidationError(line_tag(path, lineno) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
    SampleInfo s;
    s.sample_id = fields[0];
    s.subject_id = fields[1];
    s.time = parse_double(fields[2], line_tag(path, lineno));
    for (std::size_t c = 3; c < fields.size(); ++c)
      s.covariates.push_back(parse_double(fields[c], line_tag(path, lineno)));
    meta.push_back(std::move(s));
  }
  if (meta.empty())
    throw ValidationError("metadata file " + path + " has no data rows");
  return meta;
}

GmtResult read_gmt(const std::string& path,
                   const std::vector<std::string>& gene_ids) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open gene set file " + path);

  std::unordered_map<std::string, int> index;
  for (std::size_t j = 0; j < gene_ids.size(); ++j)
    index.emplace(gene_ids[j], static_cast<int>(j));

  GmtResult out;
  std::string line;
  std::size_t lineno = 0;
  while (next_line(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() < 3)
      throw ValidationError(line_tag(path, lineno) +
                            ": GMT needs name, description and at least one "
                            "gene (3 tab-separated fields)");
    GeneSet set;
    set.name = fields[0];
    std::unordered_set<std::string> seen;
    std::vector<std::string> missing;
    for (std::size_t c = 2; c < fields.size(); ++c) {
      const std::string& gid = fields[c];
      if (gid.empty()) continue;
      if (!seen.insert(gid).second) {
        out.warnings.push_back("set " + set.name + ": duplicate gene " + gid +
                               " dropped");
        continue;
      }
      auto it = index.find(gid);
      if (it == index.end())
        missing.push_back(gid);
      else
        set.gene_indices.push_back(it->second);
    }
    if (!missing.empty()) {
      std::string w = "set " + set.name + ": unmatched gene ids";
      for (const auto& gid : missing) w += " " + gid;
      out.warnings.push_back(std::move(w));
    }
    if (set.gene_indices.size() < 2) {
      out.warnings.push_back("set " + set.name +
                             " skipped: fewer than 2 genes matched");
      continue;
    }
    out.sets.push_back(std::move(set));
  }
  return out;
}

std::vector<double> bh_adjust(const std::vector<double>& p) {
  for (double v : p)
    if (!(v >= 0 && v <= 1))
      throw ValidationError("p-values must lie in [0,1]");
  const std::size_t m = p.size();
  std::vector<std::size_t> ord(m);
  std::iota(ord.begin(), ord.end(), std::size_t{0});
  std::stable_sort(ord.begin(), ord.end(),
                   [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  std::vector<double> adj(m);
  double running = 1.0;
  for (std::size_t k = m; k-- > 0;) {
    // Factor before product keeps adjusted >= raw exact: the factor is 1.0
    // at the top rank, and otherwise exceeds 1 by far more than one ulp.
    double v = p[ord[k]] * (double(m) / double(k + 1));
    running = std::min(running, v);
    adj[ord[k]] = running;
  }
  return adj;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "NA";
  char buf[40];
  if (x != 0 && std::abs(x) < 1e-4)
    std::snprintf(buf, sizeof buf, "%.9e", x);
  else
    std::snprintf(buf, sizeof buf, "%.10g", x);
  return buf;
}

void write_results(const std::vector<TestResult>& rows,
                   const std::string& path, const RunMeta& meta) {
  std::vector<double> p_raw(rows.size(),
                            std::numeric_limits<double>::quiet_NaN());
  std::vector<double> present;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].p_permutation)
      p_raw[r] = *rows[r].p_permutation;
    else if (rows[r].p_asymptotic)
      p_raw[r] = *rows[r].p_asymptotic;
    if (!std::isnan(p_raw[r])) present.push_back(p_raw[r]);
  }
  std::vector<double> adj_present = bh_adjust(present);
  std::vector<double> p_adj(rows.size(),
                            std::numeric_limits<double>::quiet_NaN());
  for (std::size_t r = 0, k = 0; r < rows.size(); ++r)
    if (!std::isnan(p_raw[r])) p_adj[r] = adj_present[k++];

  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write results to " + path);
  out << "set\tp_genes_matched\tmode\tstatistic\tdf_proxy\tp_raw\t"
         "p_adjusted\ttest_kind\tB\tseed\tp_asymptotic\tp_permutation\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const TestResult& tr = rows[r];
    double df = std::accumulate(tr.mixing_eigenvalues.begin(),
                                tr.mixing_eigenvalues.end(), 0.0);
    std::string kind = tr.p_asymptotic && tr.p_permutation ? "both"
                       : tr.p_permutation                  ? "permutation"
                                                           : "asymptotic";
    out << tr.set_name << '\t' << tr.genes_matched << '\t'
        << to_string(tr.mode) << '\t' << format_number(tr.statistic) << '\t'
        << format_number(df) << '\t' << format_number(p_raw[r]) << '\t'
        << format_number(p_adj[r]) << '\t' << kind << '\t'
        << (tr.n_permutations ? std::to_string(*tr.n_permutations) : "NA")
        << '\t' << meta.seed << '\t'
        << (tr.p_asymptotic ? format_number(*tr.p_asymptotic) : "NA") << '\t'
        << (tr.p_permutation ? format_number(*tr.p_permutation) : "NA")
        << '\n';
  }
  out.close();
  if (!out) throw ValidationError("cannot write results to " + path);

  nlohmann::json j;
  j["version"] = kToolVersion;
  j["seed"] = meta.seed;
  j["flags"] = meta.flags;
  j["timestamp"] = meta.timestamp;
  std::ofstream side(path + ".json");
  if (!side) throw ValidationError("cannot write sidecar " + path + ".json");
  side << j.dump(2) << '\n';
}

std::string study_csv_text(const std::vector<StudyRow>& rows) {
  std::ostringstream out;
  out << "param,strategy,test,replicates,rejections,rate,se\n";
  for (const StudyRow& row : rows)
    out << format_number(row.param) << ',' << to_string(row.strategy) << ','
        << to_string(row.test) << ',' << row.replicates << ','
        << row.rejections << ',' << format_number(row.rate()) << ','
        << format_number(row.se()) << '\n';
  return out.str();
}

void write_study_csv(const std::vector<StudyRow>& rows,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write study table to " + path);
  out << study_csv_text(rows);
  out.close();
  if (!out) throw ValidationError("cannot write study table to " + path);
}

} // namespace vcgsa
