#include "vcgsa/meanvar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vcgsa/errors.hpp"

namespace vcgsa {

namespace {

constexpr double kFloorFraction = 1e-8;
constexpr int kBandwidthCandidates = 25;
constexpr double kBandwidthLo = 0.05;
constexpr double kBandwidthHi = 2.0;
constexpr int kCvFolds = 5;
constexpr std::size_t kCvMinPoints = 20;
constexpr std::size_t kModelMinPoints = 10;

void check_rank(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr,
                const std::vector<std::string>& names) {
  const Eigen::Index cols = qr.cols();
  if (qr.rank() == cols) return;
  const auto& perm = qr.colsPermutation().indices();
  std::string msg = "design is rank deficient; collinear columns:";
  for (Eigen::Index k = qr.rank(); k < cols; ++k)
    msg += " " + names[static_cast<std::size_t>(perm(k))];
  throw ValidationError(msg);
}

GeneFit pack_fit(const Eigen::VectorXd& coef, const Eigen::VectorXd& y,
                 const Eigen::MatrixXd& A, Eigen::Index q, Eigen::Index K) {
  GeneFit f;
  f.alpha0 = coef(0);
  f.alpha = coef.segment(1, q);
  f.beta = coef.tail(K);
  f.fitted = A * coef;
  f.sq_resid = (y - f.fitted).array().square();
  return f;
}

// Kernel-weighted local line at x; returns false when the normal equations
// degenerate (no kernel mass or no spread under the kernel).
bool local_linear_raw(const Eigen::ArrayXd& m, const Eigen::ArrayXd& v,
                      double h, Kernel kernel, double x, double* out) {
  Eigen::ArrayXd u = m - x;
  Eigen::ArrayXd z = u / h;
  Eigen::ArrayXd k;
  if (kernel == Kernel::Gaussian) {
    k = (-0.5 * z.square()).exp();
  } else {
    k = (0.75 * (1.0 - z.square())).max(0.0);
  }
  double s0 = k.sum();
  if (!(s0 > 0)) return false;
  double s1 = (k * u).sum();
  double s2 = (k * u.square()).sum();
  // b = k * (s2 - u * s1); sum(b) = s0*s2 - s1^2 >= 0.
  double denom = s0 * s2 - s1 * s1;
  if (!(denom > 1e-14 * s0 * s2) || !(s2 > 0)) {
    // Single effective point: the weighted mean is still defined.
    *out = (k * v).sum() / s0;
    return true;
  }
  double num = (k * (s2 - u * s1) * v).sum();
  *out = num / denom;
  return std::isfinite(*out);
}

double nearest_value(const Eigen::ArrayXd& m, const Eigen::ArrayXd& v,
                     double x) {
  Eigen::Index best = 0;
  double bestd = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < m.size(); ++k) {
    double d = std::abs(m(k) - x);
    if (d < bestd) {
      bestd = d;
      best = k;
    }
  }
  return v(best);
}

double floor_for(const Eigen::ArrayXd& v) {
  double vmax = v.size() ? v.maxCoeff() : 0.0;
  double f = kFloorFraction * vmax;
  // Guards exact-fit degeneracy; keeps every weight finite.
  return f > 0 ? f : 1e-12;
}

double eval_clamped(const Eigen::ArrayXd& m, const Eigen::ArrayXd& v, double h,
                    Kernel kernel, double x, double vfloor) {
  double out;
  if (!local_linear_raw(m, v, h, kernel, x, &out)) out = nearest_value(m, v, x);
  return std::max(out, vfloor);
}

} // namespace

GeneFit fit_gene(const Eigen::VectorXd& y, const LongitudinalDesign& design,
                 const TimeBasis& basis, const Eigen::VectorXd* weights) {
  DesignMatrix dm = design_matrix(design, &basis);
  const auto N = static_cast<Eigen::Index>(design.n_obs());
  if (y.size() != N) throw ValidationError("response length does not match design");

  Eigen::VectorXd coef;
  if (weights) {
    if (weights->size() != N)
      throw ValidationError("weight length does not match design");
    if ((weights->array() <= 0).any())
      throw ValidationError("weights must be positive");
    Eigen::ArrayXd sw = weights->array().sqrt();
    Eigen::MatrixXd As = sw.matrix().asDiagonal() * dm.A;
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(As);
    check_rank(qr, dm.names);
    coef = qr.solve((y.array() * sw).matrix());
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dm.A);
    check_rank(qr, dm.names);
    coef = qr.solve(y);
  }
  return pack_fit(coef, y, dm.A,
                  static_cast<Eigen::Index>(design.n_covariates()), basis.K);
}

std::vector<GeneFit> fit_genes_batch(const Eigen::MatrixXd& Y,
                                     const LongitudinalDesign& design,
                                     const TimeBasis& basis) {
  DesignMatrix dm = design_matrix(design, &basis);
  const auto N = static_cast<Eigen::Index>(design.n_obs());
  if (Y.cols() != N)
    throw ValidationError("expression matrix does not match design");

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dm.A);
  check_rank(qr, dm.names);
  Eigen::MatrixXd coefs = qr.solve(Y.transpose()); // c x P
  Eigen::MatrixXd fitted = dm.A * coefs;           // N x P

  const auto q = static_cast<Eigen::Index>(design.n_covariates());
  std::vector<GeneFit> fits(static_cast<std::size_t>(Y.rows()));
  for (Eigen::Index g = 0; g < Y.rows(); ++g) {
    GeneFit& f = fits[static_cast<std::size_t>(g)];
    f.alpha0 = coefs(0, g);
    f.alpha = coefs.col(g).segment(1, q);
    f.beta = coefs.col(g).tail(basis.K);
    f.fitted = fitted.col(g);
    f.sq_resid = (Y.row(g).transpose() - f.fitted).array().square();
  }
  return fits;
}

std::pair<double, double> gene_level_moments(
    const GeneFit& fit, const LongitudinalDesign& design) {
  const std::size_t n = design.n_subjects();
  if (fit.fitted.size() != static_cast<Eigen::Index>(design.n_obs()))
    throw ValidationError("fit does not match design");
  double m = 0, v = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto lo = static_cast<Eigen::Index>(design.block_offset[i]);
    const auto len = static_cast<Eigen::Index>(design.block_size(i));
    m += fit.fitted.segment(lo, len).mean();
    v += fit.sq_resid.segment(lo, len).mean();
  }
  return {m / double(n), v / double(n)};
}

MeanVarianceModel::MeanVarianceModel(std::vector<double> m,
                                     std::vector<double> v, double bandwidth,
                                     Kernel kernel)
    : m_(std::move(m)), v_(std::move(v)), h_(bandwidth), kernel_(kernel) {
  if (m_.size() != v_.size())
    throw ValidationError("mean and variance point counts differ");
  if (m_.size() < kModelMinPoints)
    throw ValidationError("mean-variance smoothing needs at least 10 points");
  if (!(h_ > 0)) throw ValidationError("bandwidth must be positive");
  Eigen::ArrayXd va = Eigen::Map<const Eigen::ArrayXd>(
      v_.data(), static_cast<Eigen::Index>(v_.size()));
  v_floor_ = floor_for(va);
}

double MeanVarianceModel::operator()(double x) const {
  Eigen::Map<const Eigen::ArrayXd> ma(m_.data(),
                                      static_cast<Eigen::Index>(m_.size()));
  Eigen::Map<const Eigen::ArrayXd> va(v_.data(),
                                      static_cast<Eigen::Index>(v_.size()));
  return eval_clamped(ma, va, h_, kernel_, x, v_floor_);
}

double select_bandwidth(const std::vector<double>& m,
                        const std::vector<double>& v, Kernel kernel) {
  const std::size_t n = m.size();
  if (n != v.size()) throw ValidationError("mean and variance point counts differ");
  if (n < kModelMinPoints)
    throw ValidationError("mean-variance smoothing needs at least 10 points");

  double mmin = *std::min_element(m.begin(), m.end());
  double mmax = *std::max_element(m.begin(), m.end());
  double range = mmax - mmin;
  if (!(range > 0)) throw ValidationError("no mean spread; cannot smooth");

  if (n < kCvMinPoints) {
    double mean = 0;
    for (double x : m) mean += x;
    mean /= double(n);
    double ss = 0;
    for (double x : m) ss += (x - mean) * (x - mean);
    double sd = std::sqrt(ss / double(n - 1));
    if (!(sd > 0)) throw ValidationError("no mean spread; cannot smooth");
    return 1.06 * sd * std::pow(double(n), -0.2);
  }

  // Per-fold train/test splits, folds by point index mod kCvFolds.
  struct Fold {
    Eigen::ArrayXd train_m, train_v;
    std::vector<double> test_m, test_v;
    double vfloor = 0;
  };
  std::vector<Fold> folds(kCvFolds);
  for (int f = 0; f < kCvFolds; ++f) {
    std::vector<double> tm, tv;
    for (std::size_t k = 0; k < n; ++k) {
      if (k % kCvFolds == static_cast<std::size_t>(f)) {
        folds[f].test_m.push_back(m[k]);
        folds[f].test_v.push_back(v[k]);
      } else {
        tm.push_back(m[k]);
        tv.push_back(v[k]);
      }
    }
    folds[f].train_m = Eigen::Map<const Eigen::ArrayXd>(
        tm.data(), static_cast<Eigen::Index>(tm.size()));
    folds[f].train_v = Eigen::Map<const Eigen::ArrayXd>(
        tv.data(), static_cast<Eigen::Index>(tv.size()));
    folds[f].vfloor = floor_for(folds[f].train_v);
  }

  double best_h = 0, best_err = std::numeric_limits<double>::infinity();
  const double ratio = kBandwidthHi / kBandwidthLo;
  for (int c = 0; c < kBandwidthCandidates; ++c) {
    double h = kBandwidthLo * range *
               std::pow(ratio, double(c) / (kBandwidthCandidates - 1));
    double err = 0;
    for (const Fold& fold : folds) {
      for (std::size_t t = 0; t < fold.test_m.size(); ++t) {
        double pred = eval_clamped(fold.train_m, fold.train_v, h, kernel,
                                   fold.test_m[t], fold.vfloor);
        double d = fold.test_v[t] - pred;
        err += d * d;
      }
    }
    if (err < best_err) {
      best_err = err;
      best_h = h;
    }
  }
  return best_h;
}

VarianceWeights variance_weights(const std::vector<GeneFit>& fits,
                                 const LongitudinalDesign& design,
                                 const MeanVarOptions& opt) {
  const auto P = static_cast<Eigen::Index>(fits.size());
  const auto N = static_cast<Eigen::Index>(design.n_obs());
  if (P == 0) throw ValidationError("no gene fits");

  VarianceWeights out;
  if (opt.level == SmoothLevel::Gene) {
    out.point_m.resize(static_cast<std::size_t>(P));
    out.point_v.resize(static_cast<std::size_t>(P));
    for (Eigen::Index g = 0; g < P; ++g) {
      auto [mg, vg] = gene_level_moments(fits[static_cast<std::size_t>(g)],
                                         design);
      out.point_m[static_cast<std::size_t>(g)] = mg;
      out.point_v[static_cast<std::size_t>(g)] = vg;
    }
  } else {
    out.point_m.reserve(static_cast<std::size_t>(P) * design.n_obs());
    out.point_v.reserve(static_cast<std::size_t>(P) * design.n_obs());
    for (const GeneFit& f : fits)
      for (Eigen::Index k = 0; k < N; ++k) {
        out.point_m.push_back(f.fitted(k));
        out.point_v.push_back(f.sq_resid(k));
      }
  }

  out.bandwidth = opt.bandwidth > 0
                      ? opt.bandwidth
                      : select_bandwidth(out.point_m, out.point_v, opt.kernel);
  MeanVarianceModel model(out.point_m, out.point_v, out.bandwidth, opt.kernel);

  out.weights.resize(P, N);
  if (opt.level == SmoothLevel::Gene) {
    for (Eigen::Index g = 0; g < P; ++g) {
      double w = 1.0 / model(out.point_m[static_cast<std::size_t>(g)]);
      out.weights.row(g).setConstant(w);
    }
  } else {
    for (Eigen::Index g = 0; g < P; ++g)
      for (Eigen::Index k = 0; k < N; ++k)
        out.weights(g, k) =
            1.0 / model(fits[static_cast<std::size_t>(g)].fitted(k));
  }
  return out;
}

} // namespace vcgsa
