#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "vcgsa/data_model.hpp"
#include "vcgsa/meanvar.hpp"
#include "vcgsa/normalize.hpp"

namespace vcgsa {

// Score vector and its per-subject decomposition. Heterogeneous mode keeps
// one K-block per gene (d = pK); homogeneous mode pools genes into a single
// shared block (d = K). Contribution rows carry the nuisance-influence
// correction; for WLS residuals that correction sums to zero across
// subjects, so q_hat = sum of contribution rows / sqrt(n) still holds.
struct ScoreDecomposition {
  Eigen::VectorXd q_hat;         // d
  Eigen::MatrixXd contributions; // n x d
  int d = 0;
  SetMode mode = SetMode::Heterogeneous;
};

// Residuals of the gene-set rows centered by the fitted intercept +
// covariate part only, fit per gene by weighted least squares with the
// given weights. center_full estimates those coefficients from a fit that
// also includes the basis columns (sensitivity variant); the time trend is
// never subtracted.
struct NullFit {
  Eigen::MatrixXd residuals; // p x N
  Eigen::MatrixXd weights;   // p x N
};

NullFit null_fit(const Eigen::MatrixXd& y_set, const Eigen::MatrixXd& w_set,
                 const LongitudinalDesign& design, const TimeBasis& basis,
                 bool center_full = false);

// sigma_xi_half: optional d x d symmetric factor applied to each
// contribution (nullptr = identity).
ScoreDecomposition score_vector(const Eigen::MatrixXd& residuals,
                                const Eigen::MatrixXd& weights,
                                const Eigen::MatrixXd& basis_rows,
                                const LongitudinalDesign& design,
                                const Eigen::MatrixXd* sigma_xi_half,
                                SetMode mode);

double statistic(const ScoreDecomposition& dec);

// Eigenvalues of the empirical covariance of the per-subject contributions
// (centered, divisor n-1), sorted descending. Small negatives within
// 1e-10 * max clamp to zero; anything more negative is a numeric failure.
struct MixtureLaw {
  std::vector<double> eigenvalues;
};

MixtureLaw mixture_weights(const ScoreDecomposition& dec);

struct PvalueResult {
  double p = 1;
  bool degenerate = false; // all eigenvalues zero with Q > 0
  bool used_mc = false;
};

// Upper tail of sum(eig_l * Z_l^2) at Q. Characteristic-function inversion
// as the primary route; Monte Carlo with 1e6 draws takes over when the
// computed p-value is below 1e-4 or one eigenvalue carries more than 99%
// of the total.
PvalueResult chisq_mixture_pvalue(double Q, const MixtureLaw& law);

// Exposed separately for direct comparison tests.
//
// _imhof integrates the inversion formula lobe by lobe with an alternating
// remainder bound; absolute error is around 1e-6. _liu is the four-moment
// noncentral chi-square match: exact for equal eigenvalues, but off by
// several percent near the lower support edge of skewed spectra, which is
// why it no longer backs chisq_mixture_pvalue.
double chisq_mixture_pvalue_imhof(double Q, const std::vector<double>& eig);
double chisq_mixture_pvalue_liu(double Q, const std::vector<double>& eig);
double chisq_mixture_pvalue_mc(double Q, const std::vector<double>& eig,
                               std::size_t draws);

struct AnalysisOptions {
  WeightStrategy weights = WeightStrategy::GeneLevel;
  SetMode mode = SetMode::Heterogeneous;
  TestKind test = TestKind::Asymptotic;
  Kernel kernel = Kernel::Gaussian;
  double bandwidth = 0; // 0 = auto
  int permutations = 1000;
  std::uint64_t seed = 12345;
  double level = 0.05;
  bool pperm_add_one = false;
  bool center_full = false;
  bool perm_recompute_weights = false;
  const Eigen::MatrixXd* sigma_xi = nullptr; // PSD, square-rooted internally
};

// Full pipeline over many sets sharing one dataset: weights once, then per
// set null fit, score, mixture p-value and/or permutation p-value.
std::vector<TestResult> run_gene_set_tests(const NormalizedMatrix& norm,
                                           const LongitudinalDesign& design,
                                           const TimeBasis& basis,
                                           const std::vector<GeneSet>& sets,
                                           const AnalysisOptions& opt);

// One-set conveniences over raw counts.
TestResult asymptotic_test(const CountMatrix& counts,
                           const std::vector<SampleInfo>& meta,
                           const GeneSet& set, const TimeBasis& basis,
                           WeightStrategy ws, SetMode mode);

} // namespace vcgsa
