#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace vcgsa {

// Raw counts, P_total genes by S samples. Entries are stored as doubles but
// must be non-negative integers; validate() enforces that and id uniqueness.
struct CountMatrix {
  Eigen::MatrixXd counts;
  std::vector<std::string> gene_ids;
  std::vector<std::string> sample_ids;

  void validate() const;
};

// One row of the sample metadata table.
struct SampleInfo {
  std::string sample_id;
  std::string subject_id;
  double time = 0;
  std::vector<double> covariates;
};

// Canonical observation layout. Subjects are sorted lexicographically by id;
// within a subject, observations ascend by time with ties broken by
// sample_id. Observation k of subject i lives at index
// block_offset[i] + k; block_offset has n+1 entries.
//
// Covariates are stored per observation. File ingestion requires them to be
// constant within a subject (baseline covariates) and replicates the row;
// simulated designs may vary them by observation.
struct LongitudinalDesign {
  std::vector<std::string> subject_ids;
  std::vector<std::size_t> block_offset;
  std::vector<double> times;
  Eigen::MatrixXd covariates; // N x q
  std::vector<std::string> covariate_names;
  std::vector<std::string> sample_ids;     // canonical order
  std::vector<std::size_t> source_column;  // original column of each obs

  std::size_t n_subjects() const { return subject_ids.size(); }
  std::size_t n_obs() const { return times.size(); }
  std::size_t n_covariates() const {
    return static_cast<std::size_t>(covariates.cols());
  }
  std::size_t block_size(std::size_t i) const {
    return block_offset[i + 1] - block_offset[i];
  }

  // Permutes the columns of a P x S matrix into canonical order.
  Eigen::MatrixXd reorder_columns(const Eigen::MatrixXd& m) const;

  void check_consistent() const;
};

// Groups samples into subject blocks and fixes the canonical ordering.
// Throws ValidationError on unmapped or duplicate samples, inconsistent
// within-subject covariates, or missing values.
LongitudinalDesign validate_dataset(const CountMatrix& counts,
                                    const std::vector<SampleInfo>& meta);

// Direct construction for simulated data already in block order. Subject i
// covers observations [block_offset[i], block_offset[i+1]).
LongitudinalDesign make_design(std::vector<std::string> subject_ids,
                               std::vector<std::size_t> block_offset,
                               std::vector<double> times,
                               Eigen::MatrixXd covariates);

std::string design_to_json(const LongitudinalDesign& d);
LongitudinalDesign design_from_json(const std::string& text);

// Time basis: K functions of time evaluated per observation.
//   linear      phi(t) = t, K = 1
//   poly:d      phi(t) = (t, t^2, ..., t^d), K = d
//   spline:k    phi(t) = (t, (t-k_1)+, ..., (t-k_k)+), K = k+1, knots at
//               equally spaced quantiles of the observed times, frozen here
struct TimeBasis {
  enum class Kind { Linear, Polynomial, Spline };
  Kind kind = Kind::Linear;
  int degree = 1;
  std::vector<double> knots;
  int K = 1;

  Eigen::VectorXd evaluate(double t) const;
  Eigen::MatrixXd rows(const std::vector<double>& times) const;

  static TimeBasis linear();
  static TimeBasis polynomial(int degree);
  static TimeBasis spline(int n_knots, const std::vector<double>& times);
  static TimeBasis parse(const std::string& text,
                         const std::vector<double>& times);
  std::string describe() const;
};

// Assembled regression design [1, covariates, basis(t)]; basis == nullptr
// gives the null model [1, covariates].
struct DesignMatrix {
  Eigen::MatrixXd A;
  std::vector<std::string> names;
};

DesignMatrix design_matrix(const LongitudinalDesign& d, const TimeBasis* basis);

struct GeneSet {
  std::string name;
  std::vector<int> gene_indices; // distinct rows of the count matrix
};

enum class SetMode { Heterogeneous, Homogeneous };
enum class TestKind { Asymptotic, Permutation, Both };
enum class WeightStrategy { GeneLevel, ObservationLevel, Voom, Identity };

const char* to_string(SetMode m);
const char* to_string(TestKind t);
const char* to_string(WeightStrategy w);

struct TestResult {
  std::string set_name;
  int genes_matched = 0;
  double statistic = 0;
  std::vector<double> mixing_eigenvalues; // descending, clamped at 0
  std::optional<double> p_asymptotic;
  std::optional<double> p_permutation;
  std::optional<int> n_permutations;
  SetMode mode = SetMode::Heterogeneous;
  // Q > 0 with an all-zero mixture law; p_asymptotic forced to 0.
  bool degenerate_mixture = false;
};

} // namespace vcgsa
