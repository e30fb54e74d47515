#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vcgsa/data_model.hpp"

namespace vcgsa {

// Log2 counts-per-million. library_sizes holds the raw column sums; it is
// empty when y was produced outside the count pipeline (already-normalized
// input), which switches voom to its no-shift variant.
struct NormalizedMatrix {
  Eigen::MatrixXd y; // P_total x S
  Eigen::VectorXd library_sizes;
};

// y = log2(10^6 (0.5 + r) / (1 + L)), L the column sum of counts.
NormalizedMatrix log_cpm(const CountMatrix& counts);

// Same, with columns permuted into the design's canonical order.
NormalizedMatrix log_cpm(const CountMatrix& counts,
                         const LongitudinalDesign& design);

// Wraps an already-normalized matrix (no library sizes).
NormalizedMatrix preprocessed(Eigen::MatrixXd y);

// Robust locally weighted scatterplot smoother of y on x with tricube
// weights. span is the fraction of points in each local window; iters
// robustness reweightings follow the initial pass. Evaluation interpolates
// linearly between fitted points and is constant beyond the data range.
class LowessCurve {
public:
  LowessCurve(const std::vector<double>& x, const std::vector<double>& y,
              double span, int iters);
  double operator()(double x) const;

  const std::vector<double>& xs() const { return xs_; }
  const std::vector<double>& fitted() const { return fitted_; }

private:
  std::vector<double> xs_, fitted_;
};

// Observation-level precision weights from the residual-scale trend:
// per-gene least squares of y on [1, covariates, basis], scale
// s_j = sqrt(RSS_j), trend of sqrt(s_j) on the average log-count r_j by
// the smoother above, weights = trend(fitted count scale)^(-4). Trend
// values are clamped below at 1e-6 before the inverse fourth power.
// With empty library_sizes the count-scale shift drops out and the trend
// is evaluated at the fitted values directly.
Eigen::MatrixXd voom_weights(const NormalizedMatrix& norm,
                             const LongitudinalDesign& design,
                             const TimeBasis& basis);

} // namespace vcgsa
