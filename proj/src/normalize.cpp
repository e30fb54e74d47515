#include "vcgsa/normalize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vcgsa/errors.hpp"
#include "vcgsa/meanvar.hpp"

namespace vcgsa {

namespace {
constexpr double kLog2 = 0.6931471805599453;
constexpr double kTrendFloor = 1e-6;
constexpr double kVoomSpan = 0.5;
constexpr int kVoomRobustIters = 3;
} // namespace

NormalizedMatrix log_cpm(const CountMatrix& counts) {
  counts.validate();
  NormalizedMatrix out;
  out.library_sizes = counts.counts.colwise().sum();
  out.y.resize(counts.counts.rows(), counts.counts.cols());
  for (Eigen::Index c = 0; c < counts.counts.cols(); ++c) {
    double denom = 1.0 + out.library_sizes(c);
    out.y.col(c) = ((counts.counts.col(c).array() + 0.5) * 1e6 / denom)
                       .log() / kLog2;
  }
  return out;
}

NormalizedMatrix log_cpm(const CountMatrix& counts,
                         const LongitudinalDesign& design) {
  NormalizedMatrix out = log_cpm(counts);
  out.y = design.reorder_columns(out.y);
  Eigen::VectorXd lib(out.library_sizes.size());
  for (std::size_t k = 0; k < design.source_column.size(); ++k)
    lib(static_cast<Eigen::Index>(k)) =
        out.library_sizes(static_cast<Eigen::Index>(design.source_column[k]));
  out.library_sizes = lib;
  return out;
}

NormalizedMatrix preprocessed(Eigen::MatrixXd y) {
  NormalizedMatrix out;
  out.y = std::move(y);
  return out;
}

LowessCurve::LowessCurve(const std::vector<double>& x,
                         const std::vector<double>& y, double span,
                         int iters) {
  if (x.size() != y.size() || x.empty())
    throw ValidationError("smoother needs matching nonempty inputs");
  const std::size_t n = x.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> xs(n), ys(n);
  for (std::size_t k = 0; k < n; ++k) {
    xs[k] = x[order[k]];
    ys[k] = y[order[k]];
  }

  const std::size_t q =
      std::max<std::size_t>(2, static_cast<std::size_t>(
                                   std::ceil(span * double(n))));
  const std::size_t window = std::min(q, n);

  std::vector<double> fitted(n, 0.0), robust(n, 1.0);
  for (int iter = 0; iter <= iters; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      // Window of the `window` points nearest to xs[i] (contiguous in the
      // sorted order). Start with any window containing i, then slide
      // toward the closer neighbor; i never leaves the window.
      std::size_t lo = i >= window - 1 ? i - (window - 1) : 0;
      if (lo + window > n) lo = n - window;
      std::size_t hi = lo + window - 1;
      for (bool moved = true; moved;) {
        moved = false;
        if (hi + 1 < n && xs[hi + 1] - xs[i] < xs[i] - xs[lo]) {
          ++lo;
          ++hi;
          moved = true;
        } else if (lo > 0 && xs[i] - xs[lo - 1] < xs[hi] - xs[i]) {
          --lo;
          --hi;
          moved = true;
        }
      }

      double maxd = std::max(xs[i] - xs[lo], xs[hi] - xs[i]);
      double sw = 0, swx = 0, swy = 0, swxx = 0, swxy = 0;
      for (std::size_t j = lo; j <= hi; ++j) {
        double w;
        if (maxd <= 0) {
          w = robust[j];
        } else {
          double u = std::abs(xs[j] - xs[i]) / maxd;
          if (u >= 1) {
            w = 0;
          } else {
            double c = 1 - u * u * u;
            w = c * c * c * robust[j];
          }
        }
        if (w <= 0) continue;
        double dx = xs[j] - xs[i];
        sw += w;
        swx += w * dx;
        swy += w * ys[j];
        swxx += w * dx * dx;
        swxy += w * dx * ys[j];
      }
      if (sw <= 0) {
        fitted[i] = ys[i];
        continue;
      }
      double det = sw * swxx - swx * swx;
      if (swxx > 0 && det > 1e-10 * sw * swxx) {
        // Local line evaluated at the query point.
        double b1 = (sw * swxy - swx * swy) / det;
        fitted[i] = (swy - b1 * swx) / sw;
      } else {
        fitted[i] = swy / sw;
      }
    }

    if (iter == iters) break;

    std::vector<double> absres(n);
    for (std::size_t k = 0; k < n; ++k) absres[k] = std::abs(ys[k] - fitted[k]);
    std::vector<double> sorted_res(absres);
    std::nth_element(sorted_res.begin(), sorted_res.begin() + n / 2,
                     sorted_res.end());
    double med = sorted_res[n / 2];
    if (n % 2 == 0) {
      double lower =
          *std::max_element(sorted_res.begin(), sorted_res.begin() + n / 2);
      med = 0.5 * (med + lower);
    }
    if (med <= 0) break; // residuals already tiny; weights stay as-is
    for (std::size_t k = 0; k < n; ++k) {
      double u = absres[k] / (6.0 * med);
      if (u >= 1) {
        robust[k] = 0;
      } else {
        double c = 1 - u * u;
        robust[k] = c * c;
      }
    }
  }

  // Collapse duplicate x for interpolation.
  xs_.reserve(n);
  fitted_.reserve(n);
  std::size_t k = 0;
  while (k < n) {
    std::size_t j = k;
    double acc = 0;
    while (j < n && xs[j] == xs[k]) acc += fitted[j++];
    xs_.push_back(xs[k]);
    fitted_.push_back(acc / double(j - k));
    k = j;
  }
}

double LowessCurve::operator()(double x) const {
  if (x <= xs_.front()) return fitted_.front();
  if (x >= xs_.back()) return fitted_.back();
  auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
  std::size_t hi = static_cast<std::size_t>(it - xs_.begin());
  std::size_t lo = hi - 1;
  double frac = (x - xs_[lo]) / (xs_[hi] - xs_[lo]);
  return fitted_[lo] * (1 - frac) + fitted_[hi] * frac;
}

Eigen::MatrixXd voom_weights(const NormalizedMatrix& norm,
                             const LongitudinalDesign& design,
                             const TimeBasis& basis) {
  const Eigen::Index P = norm.y.rows();
  const auto N = static_cast<Eigen::Index>(design.n_obs());
  if (norm.y.cols() != N)
    throw ValidationError("normalized matrix does not match design");
  if (P < 2) throw ValidationError("insufficient genes for trend fit");

  const bool have_lib = norm.library_sizes.size() > 0;
  const double log2_1e6 = std::log2(1e6);

  // Per-gene least squares on the full design, one shared factorization.
  std::vector<GeneFit> fits = fit_genes_batch(norm.y, design, basis);

  Eigen::VectorXd lib_shift = Eigen::VectorXd::Zero(N);
  if (have_lib)
    lib_shift = ((norm.library_sizes.array() + 1.0).log() / kLog2) - log2_1e6;

  std::vector<double> trend_x(P), trend_y(P);
  for (Eigen::Index g = 0; g < P; ++g) {
    double rss = fits[g].sq_resid.sum();
    trend_y[g] = std::pow(rss, 0.25); // sqrt of the residual scale sqrt(RSS)
    trend_x[g] = norm.y.row(g).mean() + (have_lib ? lib_shift.mean() : 0.0);
  }

  LowessCurve trend(trend_x, trend_y, kVoomSpan, kVoomRobustIters);

  Eigen::MatrixXd w(P, N);
  for (Eigen::Index g = 0; g < P; ++g)
    for (Eigen::Index k = 0; k < N; ++k) {
      double at = fits[g].fitted(k) + (have_lib ? lib_shift(k) : 0.0);
      double f = std::max(trend(at), kTrendFloor);
      w(g, k) = 1.0 / (f * f * f * f);
    }
  return w;
}

} // namespace vcgsa
