#include "vcgsa/vcscore.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/non_central_chi_squared.hpp>

#include "vcgsa/errors.hpp"
#include "vcgsa/parallel.hpp"
#include "vcgsa/permutation.hpp"
#include "vcgsa/rng.hpp"

namespace vcgsa {

namespace {

constexpr double kEigClampFraction = 1e-10;
constexpr double kMcTailP = 1e-4;
constexpr double kSkewFallbackShare = 0.99;
constexpr std::size_t kMcDraws = 1000000;
constexpr std::uint64_t kInternalMcSeed = 123456789;

// 20-point Gauss-Legendre rule on [-1, 1], positive half; nodes mirror.
constexpr int kGlHalf = 10;
constexpr double kGlNode[kGlHalf] = {
    0.0765265211334973, 0.2277858511416451, 0.3737060887154195,
    0.5108670019508271, 0.6360536807265150, 0.7463319064601508,
    0.8391169718222188, 0.9122344282513259, 0.9639719272779138,
    0.9931285991850949};
constexpr double kGlWeight[kGlHalf] = {
    0.1527533871307258, 0.1491729864726037, 0.1420961093183820,
    0.1316886384491766, 0.1181945319615184, 0.1019301198172404,
    0.0832767415767048, 0.0626720483341091, 0.0406014298003869,
    0.0176140071391521};

Eigen::VectorXd wls_coef(const Eigen::MatrixXd& A, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& w) {
  Eigen::MatrixXd AtW = A.transpose() * w.asDiagonal();
  Eigen::MatrixXd G = AtW * A;
  Eigen::VectorXd rhs = AtW * y;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
  if (ldlt.info() == Eigen::Success) {
    Eigen::VectorXd coef = ldlt.solve(rhs);
    if (((G * coef - rhs).norm() <=
         1e-8 * (rhs.norm() + 1e-30))) // accept only a genuine solution
      return coef;
  }
  Eigen::ArrayXd sw = w.array().sqrt();
  Eigen::MatrixXd As = sw.matrix().asDiagonal() * A;
  return Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(As).solve(
      (y.array() * sw).matrix());
}

} // namespace

NullFit null_fit(const Eigen::MatrixXd& y_set, const Eigen::MatrixXd& w_set,
                 const LongitudinalDesign& design, const TimeBasis& basis,
                 bool center_full) {
  const auto N = static_cast<Eigen::Index>(design.n_obs());
  if (y_set.cols() != N || w_set.rows() != y_set.rows() ||
      w_set.cols() != N)
    throw ValidationError("expression/weight dimensions do not match design");
  if ((w_set.array() <= 0).any())
    throw ValidationError("weights must be positive");

  DesignMatrix dm = design_matrix(design, center_full ? &basis : nullptr);
  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dm.A);
    if (qr.rank() < dm.A.cols()) {
      const auto& perm = qr.colsPermutation().indices();
      std::string msg = "design is rank deficient; collinear columns:";
      for (Eigen::Index k = qr.rank(); k < dm.A.cols(); ++k)
        msg += " " + dm.names[static_cast<std::size_t>(perm(k))];
      throw ValidationError(msg);
    }
  }

  // Residuals always center by the intercept + covariate part only; with
  // center_full those coefficients come from a fit that also includes the
  // basis columns, so the time trend stays in the residual either way.
  const Eigen::Index nullcols =
      1 + static_cast<Eigen::Index>(design.n_covariates());
  NullFit nf;
  nf.weights = w_set;
  nf.residuals.resize(y_set.rows(), N);
  for (Eigen::Index g = 0; g < y_set.rows(); ++g) {
    Eigen::VectorXd y = y_set.row(g).transpose();
    Eigen::VectorXd coef = wls_coef(dm.A, y, w_set.row(g).transpose());
    nf.residuals.row(g) =
        (y - dm.A.leftCols(nullcols) * coef.head(nullcols)).transpose();
  }
  return nf;
}

ScoreDecomposition score_vector(const Eigen::MatrixXd& residuals,
                                const Eigen::MatrixXd& weights,
                                const Eigen::MatrixXd& basis_rows,
                                const LongitudinalDesign& design,
                                const Eigen::MatrixXd* sigma_xi_half,
                                SetMode mode) {
  const auto N = static_cast<Eigen::Index>(design.n_obs());
  const Eigen::Index p = residuals.rows();
  const Eigen::Index K = basis_rows.cols();
  if (residuals.cols() != N || basis_rows.rows() != N)
    throw ValidationError("score inputs do not match design");
  if (weights.rows() != p || weights.cols() != N)
    throw ValidationError("weight dimensions do not match residuals");
  if ((weights.array() <= 0).any())
    throw ValidationError("weights must be positive");

  const Eigen::Index d = mode == SetMode::Heterogeneous ? p * K : K;
  if (sigma_xi_half) {
    if (sigma_xi_half->rows() != d || sigma_xi_half->cols() != d)
      throw ValidationError("sigma_xi dimension does not match score");
    if ((*sigma_xi_half - sigma_xi_half->transpose()).cwiseAbs().maxCoeff() >
        1e-8 * (1.0 + sigma_xi_half->cwiseAbs().maxCoeff()))
      throw ValidationError("sigma_xi half-matrix must be symmetric");
  }

  const auto n = static_cast<Eigen::Index>(design.n_subjects());
  Eigen::MatrixXd wr = weights.cwiseProduct(residuals); // p x N

  // Per-subject pieces of q are Phi_i' W_i r_i minus the influence of the
  // estimated nuisance coefficients, B' C^{-1} U_i' W_i r_i, with U the
  // null design and B = U'W Phi, C = U'W U accumulated per gene. For WLS
  // residuals the correction rows sum to zero, so q_hat itself is the plain
  // normalized sum; without the correction the contribution covariance
  // estimates the unprojected Var(Phi'W eps) and the test turns badly
  // conservative.
  const Eigen::MatrixXd U = design_matrix(design, nullptr).A; // N x m
  std::vector<Eigen::MatrixXd> proj(static_cast<std::size_t>(p));
  for (Eigen::Index g = 0; g < p; ++g) {
    Eigen::MatrixXd WU = weights.row(g).transpose().asDiagonal() * U;
    Eigen::MatrixXd C = U.transpose() * WU;          // m x m
    Eigen::MatrixXd B = WU.transpose() * basis_rows; // m x K
    Eigen::LDLT<Eigen::MatrixXd> ldlt(C);
    if (ldlt.info() != Eigen::Success)
      throw NumericError("null design cross-moment matrix is singular");
    proj[static_cast<std::size_t>(g)] = ldlt.solve(B); // m x K
  }

  ScoreDecomposition dec;
  dec.mode = mode;
  dec.d = static_cast<int>(d);
  dec.contributions.resize(n, d);
  Eigen::RowVectorXd raw(d), corr(d);
  Eigen::RowVectorXd raw_sum = Eigen::RowVectorXd::Zero(d);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto lo =
        static_cast<Eigen::Index>(design.block_offset[static_cast<std::size_t>(i)]);
    const auto len = static_cast<Eigen::Index>(
        design.block_size(static_cast<std::size_t>(i)));
    Eigen::MatrixXd Bi = wr.middleCols(lo, len) *
                         basis_rows.middleRows(lo, len); // p x K
    Eigen::MatrixXd Ui = wr.middleCols(lo, len) *
                         U.middleRows(lo, len); // p x m, row g = u_hat_gi'
    if (mode == SetMode::Heterogeneous) {
      for (Eigen::Index g = 0; g < p; ++g) {
        raw.segment(g * K, K) = Bi.row(g);
        corr.segment(g * K, K) =
            Ui.row(g) * proj[static_cast<std::size_t>(g)];
      }
    } else {
      raw = Bi.colwise().sum();
      corr.setZero();
      for (Eigen::Index g = 0; g < p; ++g)
        corr += Ui.row(g) * proj[static_cast<std::size_t>(g)];
    }
    raw_sum += raw;
    dec.contributions.row(i) = raw - corr;
    if (sigma_xi_half)
      dec.contributions.row(i) =
          (*sigma_xi_half * dec.contributions.row(i).transpose()).transpose();
  }
  Eigen::VectorXd q_raw = raw_sum.transpose() / std::sqrt(double(n));
  dec.q_hat = sigma_xi_half ? Eigen::VectorXd(*sigma_xi_half * q_raw) : q_raw;
  return dec;
}

double statistic(const ScoreDecomposition& dec) {
  return dec.q_hat.squaredNorm();
}

MixtureLaw mixture_weights(const ScoreDecomposition& dec) {
  const Eigen::Index n = dec.contributions.rows();
  if (n < 2)
    throw ValidationError(
        "cannot estimate contribution covariance from one subject");
  Eigen::RowVectorXd mean = dec.contributions.colwise().mean();
  Eigen::MatrixXd centered = dec.contributions.rowwise() - mean;
  Eigen::MatrixXd cov =
      centered.transpose() * centered / double(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success)
    throw NumericError("eigensolve of contribution covariance failed");

  Eigen::VectorXd ev = es.eigenvalues().reverse(); // descending
  MixtureLaw law;
  law.eigenvalues.resize(static_cast<std::size_t>(ev.size()));
  double lmax = ev.size() ? ev(0) : 0.0;
  if (lmax <= 0) {
    // Covariance is numerically the zero matrix.
    std::fill(law.eigenvalues.begin(), law.eigenvalues.end(), 0.0);
    return law;
  }
  const double eps = kEigClampFraction * lmax;
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    double l = ev(k);
    if (l < -eps)
      throw NumericError(
          "contribution covariance has a negative eigenvalue beyond "
          "tolerance");
    law.eigenvalues[static_cast<std::size_t>(k)] = std::max(l, 0.0);
  }
  return law;
}

double chisq_mixture_pvalue_liu(double Q, const std::vector<double>& eig) {
  double c1 = 0, c2 = 0, c3 = 0, c4 = 0;
  for (double l : eig) {
    if (l <= 0) continue;
    c1 += l;
    c2 += l * l;
    c3 += l * l * l;
    c4 += l * l * l * l;
  }
  if (c2 <= 0) return Q > 0 ? 0.0 : 1.0;

  const double s1 = c3 / std::pow(c2, 1.5);
  const double s2 = c4 / (c2 * c2);
  double df, delta;
  if (s1 * s1 > s2) {
    double a = 1.0 / (s1 - std::sqrt(s1 * s1 - s2));
    delta = s1 * a * a * a - a * a;
    df = a * a - 2.0 * delta;
  } else {
    // For nonnegative mixtures s1^2 <= s2 always holds (Cauchy-Schwarz),
    // so this is the live branch: central approximant.
    delta = 0.0;
    df = 1.0 / s2;
  }
  const double tstar = (Q - c1) / std::sqrt(2.0 * c2);
  const double x = tstar * std::sqrt(2.0 * (df + 2.0 * delta)) + df + delta;
  if (x <= 0) return 1.0;
  try {
    if (delta > 0) {
      boost::math::non_central_chi_squared_distribution<double> dist(df,
                                                                     delta);
      return boost::math::cdf(boost::math::complement(dist, x));
    }
    boost::math::chi_squared_distribution<double> dist(df);
    return boost::math::cdf(boost::math::complement(dist, x));
  } catch (const std::exception& e) {
    throw NumericError(std::string("tail evaluation failed: ") + e.what());
  }
}

double chisq_mixture_pvalue_imhof(double Q, const std::vector<double>& eig) {
  double lmax = 0;
  for (double l : eig) lmax = std::max(lmax, l);
  std::vector<double> lam;
  double c1 = 0;
  for (double l : eig)
    // Eigenvalues below 1e-7 of the largest shift the law by less than the
    // quadrature error yet stretch the oscillatory tail enormously.
    if (l > 1e-7 * lmax) {
      lam.push_back(l);
      c1 += l;
    }
  if (lam.empty()) return Q > 0 ? 0.0 : 1.0;
  if (Q <= 0) return 1.0;

  // P(sum > Q) = 1/2 + (1/pi) * integral of sin(theta(u)) / (u rho(u)),
  // theta(u) = (sum atan(l u) - Q u) / 2, rho(u) = prod (1 + l^2 u^2)^(1/4).
  auto theta = [&](double u) {
    double s = 0;
    for (double l : lam) s += std::atan(l * u);
    return 0.5 * (s - Q * u);
  };
  auto dtheta = [&](double u) {
    double s = 0;
    for (double l : lam) s += l / (1.0 + l * l * u * u);
    return 0.5 * (s - Q);
  };
  auto integrand = [&](double u) {
    if (u <= 0) return 0.5 * (c1 - Q); // limit at the origin
    double s = 0;
    for (double l : lam) s += std::log1p(l * l * u * u);
    return std::sin(theta(u)) * std::exp(-0.25 * s) / u;
  };

  // theta' decreases strictly, so theta is unimodal with peak at ustar.
  double ustar = 0;
  if (dtheta(0) > 0) {
    double hi = 1.0 / lmax;
    while (dtheta(hi) > 0) hi *= 2;
    double lo = 0;
    for (int it = 0; it < 200; ++it) {
      ustar = 0.5 * (lo + hi);
      (dtheta(ustar) > 0 ? lo : hi) = ustar;
    }
  }
  const double peak = theta(ustar);

  // Past the peak theta falls monotonically through the multiples of pi;
  // those crossings bound single-sign lobes of the integrand.
  constexpr double kPi = 3.14159265358979323846;
  double step = 2.0 * kPi / Q;
  double prev = ustar;
  auto next_root = [&](double target) {
    double lo = prev, hi = prev + step;
    while (theta(hi) > target) {
      lo = hi;
      hi += step;
    }
    for (int it = 0; it < 200; ++it) {
      double mid = 0.5 * (lo + hi);
      (theta(mid) > target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
  };
  auto gauss = [&](double a, double b) {
    double mid = 0.5 * (a + b), half = 0.5 * (b - a), s = 0;
    for (int k = 0; k < kGlHalf; ++k)
      s += kGlWeight[k] * (integrand(mid - half * kGlNode[k]) +
                           integrand(mid + half * kGlNode[k]));
    return half * s;
  };

  long k0 = static_cast<long>(std::floor(peak / kPi));
  while (static_cast<double>(k0) * kPi >= peak) --k0;
  double head_end = next_root(static_cast<double>(k0) * kPi);

  // The head may hold several rising oscillations when the peak is high;
  // refine by interval halving until the Simpson correction is negligible.
  double total = 0;
  {
    struct Seg {
      double a, b, fa, fm, fb, coarse;
      int depth;
    };
    auto simpson = [&](double a, double fa, double fm, double fb, double b) {
      return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    };
    std::vector<Seg> stack;
    double a = 0, b = head_end;
    double fa = integrand(a), fm = integrand(0.5 * (a + b)),
           fb = integrand(b);
    stack.push_back({a, b, fa, fm, fb, simpson(a, fa, fm, fb, b), 0});
    while (!stack.empty()) {
      Seg s = stack.back();
      stack.pop_back();
      double m = 0.5 * (s.a + s.b);
      double lm = integrand(0.5 * (s.a + m)), rm = integrand(0.5 * (m + s.b));
      double left = simpson(s.a, s.fa, lm, s.fm, m);
      double right = simpson(m, s.fm, rm, s.fb, s.b);
      if (s.depth >= 40 || std::abs(left + right - s.coarse) < 1e-10) {
        total += left + right;
        continue;
      }
      stack.push_back({s.a, m, s.fa, lm, s.fm, left, s.depth + 1});
      stack.push_back({m, s.b, s.fm, rm, s.fb, right, s.depth + 1});
    }
  }

  // Alternating lobes; the remainder is bounded by the first omitted lobe.
  prev = head_end;
  int tiny_run = 0;
  for (long lobe = 0; lobe < 200000 && tiny_run < 2; ++lobe) {
    --k0;
    double end = next_root(static_cast<double>(k0) * kPi);
    double piece = gauss(prev, end);
    total += piece;
    prev = end;
    tiny_run = std::abs(piece) < 1e-9 ? tiny_run + 1 : 0;
  }

  return std::min(1.0, std::max(0.0, 0.5 + total / kPi));
}

double chisq_mixture_pvalue_mc(double Q, const std::vector<double>& eig,
                               std::size_t draws) {
  std::vector<double> lam;
  for (double l : eig)
    if (l > 0) lam.push_back(l);
  if (lam.empty()) return Q > 0 ? 0.0 : 1.0;
  if (draws == 0) throw ValidationError("Monte Carlo needs draws > 0");

  Philox g(kInternalMcSeed, kStreamPvalueMC, 0, 0);
  std::normal_distribution<double> normal;
  std::size_t count = 0;
  for (std::size_t t = 0; t < draws; ++t) {
    double s = 0;
    for (double l : lam) {
      double z = normal(g);
      s += l * z * z;
    }
    if (s >= Q) ++count;
  }
  return double(count) / double(draws);
}

PvalueResult chisq_mixture_pvalue(double Q, const MixtureLaw& law) {
  PvalueResult r;
  if (Q <= 0) {
    r.p = 1;
    return r;
  }
  double sum = 0, mx = 0;
  for (double l : law.eigenvalues)
    if (l > 0) {
      sum += l;
      mx = std::max(mx, l);
    }
  if (sum <= 0) {
    r.p = 0;
    r.degenerate = true;
    return r;
  }
  double p = chisq_mixture_pvalue_imhof(Q, law.eigenvalues);
  if (p < kMcTailP || mx / sum > kSkewFallbackShare) {
    p = chisq_mixture_pvalue_mc(Q, law.eigenvalues, kMcDraws);
    r.used_mc = true;
  }
  r.p = p;
  return r;
}

namespace {

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& S) {
  if (S.rows() != S.cols())
    throw ValidationError("sigma_xi must be square");
  if ((S - S.transpose()).cwiseAbs().maxCoeff() >
      1e-8 * (1.0 + S.cwiseAbs().maxCoeff()))
    throw ValidationError("sigma_xi must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success)
    throw NumericError("eigensolve of sigma_xi failed");
  Eigen::VectorXd ev = es.eigenvalues();
  double lmax = ev.maxCoeff();
  for (Eigen::Index k = 0; k < ev.size(); ++k) {
    if (ev(k) < -1e-10 * std::max(lmax, 1.0))
      throw ValidationError("sigma_xi is not positive semidefinite");
    ev(k) = std::sqrt(std::max(ev(k), 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Per-observation weights for every gene under the requested strategy.
Eigen::MatrixXd strategy_weights(const NormalizedMatrix& norm,
                                 const LongitudinalDesign& design,
                                 const TimeBasis& basis,
                                 const AnalysisOptions& opt,
                                 double* bandwidth_used) {
  const Eigen::Index P = norm.y.rows();
  const auto N = static_cast<Eigen::Index>(design.n_obs());
  switch (opt.weights) {
    case WeightStrategy::Identity:
      return Eigen::MatrixXd::Ones(P, N);
    case WeightStrategy::Voom:
      return voom_weights(norm, design, basis);
    case WeightStrategy::GeneLevel:
    case WeightStrategy::ObservationLevel: {
      std::vector<GeneFit> fits = fit_genes_batch(norm.y, design, basis);
      MeanVarOptions mv;
      mv.kernel = opt.kernel;
      mv.level = opt.weights == WeightStrategy::GeneLevel
                     ? SmoothLevel::Gene
                     : SmoothLevel::Observation;
      mv.bandwidth = opt.bandwidth;
      VarianceWeights vw = variance_weights(fits, design, mv);
      if (bandwidth_used) *bandwidth_used = vw.bandwidth;
      return vw.weights;
    }
  }
  throw ValidationError("unknown weight strategy");
}

} // namespace

std::vector<TestResult> run_gene_set_tests(const NormalizedMatrix& norm,
                                           const LongitudinalDesign& design,
                                           const TimeBasis& basis,
                                           const std::vector<GeneSet>& sets,
                                           const AnalysisOptions& opt) {
  design.check_consistent();
  const Eigen::Index P = norm.y.rows();
  const auto N = static_cast<Eigen::Index>(design.n_obs());
  if (norm.y.cols() != N)
    throw ValidationError("expression matrix does not match design");

  const bool want_perm = opt.test != TestKind::Asymptotic;
  const bool want_asym = opt.test != TestKind::Permutation;
  if (want_perm && opt.permutations < 1)
    throw ValidationError("permutation count must be >= 1");
  if (want_perm && opt.level > 0 &&
      double(opt.permutations) < 1.0 / opt.level)
    std::cerr << "warning: " << opt.permutations
              << " permutations cannot resolve level " << opt.level
              << "; increase --permutations\n";

  double bandwidth_used = opt.bandwidth;
  Eigen::MatrixXd W = strategy_weights(norm, design, basis, opt,
                                       &bandwidth_used);

  Eigen::MatrixXd shalf_store;
  const Eigen::MatrixXd* shalf = nullptr;
  if (opt.sigma_xi) {
    shalf_store = sqrt_psd(*opt.sigma_xi);
    shalf = &shalf_store;
  }

  const Eigen::MatrixXd basis_rows = basis.rows(design.times);

  std::vector<TestResult> results(sets.size());
  parallel_for(sets.size(), [&](std::size_t s) {
    const GeneSet& set = sets[s];
    const auto p = static_cast<Eigen::Index>(set.gene_indices.size());
    if (p < 1) throw ValidationError("empty gene set " + set.name);
    Eigen::MatrixXd y_set(p, N), w_set(p, N);
    for (Eigen::Index g = 0; g < p; ++g) {
      int idx = set.gene_indices[static_cast<std::size_t>(g)];
      if (idx < 0 || idx >= P)
        throw ValidationError("gene index out of range in set " + set.name);
      y_set.row(g) = norm.y.row(idx);
      w_set.row(g) = W.row(idx);
    }

    NullFit nf = null_fit(y_set, w_set, design, basis, opt.center_full);
    ScoreDecomposition dec = score_vector(nf.residuals, nf.weights,
                                          basis_rows, design, shalf, opt.mode);
    TestResult tr;
    tr.set_name = set.name;
    tr.genes_matched = static_cast<int>(p);
    tr.statistic = statistic(dec);
    tr.mode = opt.mode;
    MixtureLaw law = mixture_weights(dec);
    tr.mixing_eigenvalues = law.eigenvalues;

    if (want_asym) {
      PvalueResult pv = chisq_mixture_pvalue(tr.statistic, law);
      tr.p_asymptotic = pv.p;
      tr.degenerate_mixture = pv.degenerate;
    }
    if (want_perm) {
      std::vector<double> qstar;
      if (opt.perm_recompute_weights) {
        qstar.resize(static_cast<std::size_t>(opt.permutations));
        AnalysisOptions inner = opt;
        inner.bandwidth = bandwidth_used; // freeze: isolate weight effect
        for (int b = 0; b < opt.permutations; ++b) {
          auto perm = within_subject_permutation(
              design, opt.seed, static_cast<std::uint32_t>(b));
          LongitudinalDesign dperm = design;
          for (std::size_t k = 0; k < perm.size(); ++k)
            dperm.times[k] = design.times[perm[k]];
          Eigen::MatrixXd Wb =
              strategy_weights(norm, dperm, basis, inner, nullptr);
          Eigen::MatrixXd wb_set(p, N);
          for (Eigen::Index g = 0; g < p; ++g)
            wb_set.row(g) = Wb.row(set.gene_indices[static_cast<std::size_t>(g)]);
          NullFit nfb = null_fit(y_set, wb_set, dperm, basis, opt.center_full);
          ScoreDecomposition db =
              score_vector(nfb.residuals, nfb.weights,
                           basis.rows(dperm.times), dperm, shalf, opt.mode);
          qstar[static_cast<std::size_t>(b)] = statistic(db);
        }
      } else {
        qstar = permutation_statistics(nf, basis_rows, design, shalf,
                                       opt.mode, opt.permutations, opt.seed);
      }
      tr.p_permutation =
          permutation_pvalue(tr.statistic, qstar, opt.pperm_add_one);
      tr.n_permutations = opt.permutations;
    }
    results[s] = tr;
  });
  return results;
}

TestResult asymptotic_test(const CountMatrix& counts,
                           const std::vector<SampleInfo>& meta,
                           const GeneSet& set, const TimeBasis& basis,
                           WeightStrategy ws, SetMode mode) {
  LongitudinalDesign design = validate_dataset(counts, meta);
  NormalizedMatrix norm = log_cpm(counts, design);
  AnalysisOptions opt;
  opt.weights = ws;
  opt.mode = mode;
  opt.test = TestKind::Asymptotic;
  return run_gene_set_tests(norm, design, basis, {set}, opt).front();
}

} // namespace vcgsa
