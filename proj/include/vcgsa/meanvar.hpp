#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "vcgsa/data_model.hpp"

namespace vcgsa {

// Least-squares fit of one gene on [1, covariates, basis].
struct GeneFit {
  double alpha0 = 0;
  Eigen::VectorXd alpha;    // q
  Eigen::VectorXd beta;     // K
  Eigen::VectorXd fitted;   // N
  Eigen::VectorXd sq_resid; // N, (y - fitted)^2
};

// weights == nullptr means ordinary least squares.
GeneFit fit_gene(const Eigen::VectorXd& y, const LongitudinalDesign& design,
                 const TimeBasis& basis,
                 const Eigen::VectorXd* weights = nullptr);

// All genes against the shared design matrix; one factorization serves every
// row of Y. Unweighted.
std::vector<GeneFit> fit_genes_batch(const Eigen::MatrixXd& Y,
                                     const LongitudinalDesign& design,
                                     const TimeBasis& basis);

// Subject-equal double averages of fitted values and squared residuals:
// each subject contributes its within-subject mean with weight 1/n.
std::pair<double, double> gene_level_moments(const GeneFit& fit,
                                             const LongitudinalDesign& design);

enum class Kernel { Gaussian, Epanechnikov };
enum class SmoothLevel { Gene, Observation };

// Local linear regression of v on m. Evaluation is clamped below at
// v_floor = 1e-8 * max(v); queries where every kernel weight underflows to
// zero fall back to the nearest point's value.
class MeanVarianceModel {
public:
  MeanVarianceModel(std::vector<double> m, std::vector<double> v,
                    double bandwidth, Kernel kernel);

  double operator()(double x) const;

  double bandwidth() const { return h_; }
  Kernel kernel() const { return kernel_; }
  const std::vector<double>& m() const { return m_; }
  const std::vector<double>& v() const { return v_; }

private:
  std::vector<double> m_, v_;
  double h_;
  double v_floor_;
  Kernel kernel_;
};

// Bandwidth by 5-fold cross-validation over 25 log-spaced candidates in
// [0.05, 2] * range(m); folds assigned by point index mod 5. Requires at
// least 20 points; between 10 and 19 points falls back to the normal
// reference rule 1.06 * sd(m) * n^(-1/5).
double select_bandwidth(const std::vector<double>& m,
                        const std::vector<double>& v, Kernel kernel);

struct MeanVarOptions {
  Kernel kernel = Kernel::Gaussian;
  SmoothLevel level = SmoothLevel::Gene;
  double bandwidth = 0; // 0 = select by cross-validation
};

struct VarianceWeights {
  Eigen::MatrixXd weights; // P x N, 1 / smoothed variance
  std::vector<double> point_m, point_v;
  double bandwidth = 0;
};

// Weights 1/omega(m) per observation. Gene level evaluates the smoother at
// each gene's mean (one weight per gene, constant across observations);
// observation level evaluates at every fitted value.
VarianceWeights variance_weights(const std::vector<GeneFit>& fits,
                                 const LongitudinalDesign& design,
                                 const MeanVarOptions& opt);

} // namespace vcgsa
