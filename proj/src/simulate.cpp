#include "vcgsa/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "vcgsa/errors.hpp"
#include "vcgsa/normalize.hpp"
#include "vcgsa/parallel.hpp"
#include "vcgsa/vcscore.hpp"

namespace vcgsa {

namespace {

// The eta scale factor reads "sum over observations divided by P" as the
// per-gene observation AVERAGE divided by P. The raw-sum reading inflates
// the mean to ~1e5, drowning every time effect; the average keeps the
// mean near eta^2/P where trends stay detectable.
constexpr bool kEtaScaleUsesMean = true;

double eta_scale(double sum_eta, int n_obs, int P) {
  double s = kEtaScaleUsesMean ? sum_eta / n_obs : sum_eta;
  return s / P;
}

void check_dims(int n, int n_i, int P, int p) {
  if (n < 1 || n_i < 1 || P < 1 || p < 1)
    throw ValidationError("simulation dimensions must be positive");
  if (p > P)
    throw ValidationError("set size exceeds total gene count");
}

std::vector<std::string> subject_names(int n) {
  std::vector<std::string> ids(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = "s" + std::to_string(i + 1);
  return ids;
}

std::vector<std::size_t> even_offsets(int n, int n_i) {
  std::vector<std::size_t> off(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i)
    off[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i) *
                                       static_cast<std::size_t>(n_i);
  return off;
}

GeneSet leading_set(int p) {
  GeneSet set;
  set.name = "sim_set";
  set.gene_indices.resize(static_cast<std::size_t>(p));
  std::iota(set.gene_indices.begin(), set.gene_indices.end(), 0);
  return set;
}

// Column order that sorts each subject's observations by time (stable, so
// tied times keep their draw order).
std::vector<std::size_t> time_order(const std::vector<double>& times, int n,
                                    int n_i) {
  std::vector<std::size_t> ord(times.size());
  std::iota(ord.begin(), ord.end(), std::size_t{0});
  for (int i = 0; i < n; ++i) {
    auto lo = ord.begin() + static_cast<std::ptrdiff_t>(i) * n_i;
    std::stable_sort(lo, lo + n_i, [&](std::size_t a, std::size_t b) {
      return times[a] < times[b];
    });
  }
  return ord;
}

} // namespace

SimDataset gen_misspecified(const MisspecifiedConfig& cfg, std::uint64_t seed,
                            std::uint32_t rep) {
  check_dims(cfg.n, cfg.n_i, cfg.P, cfg.p);
  const int n = cfg.n, ni = cfg.n_i, P = cfg.P;
  const int N = n * ni;
  const int q = 3;

  Philox g = replicate_rng(seed, rep);
  std::normal_distribution<double> N01;
  std::uniform_real_distribution<double> U01(0.0, 1.0);
  std::exponential_distribution<double> exp_mean100(0.01);

  Eigen::VectorXd alpha(P);
  for (int j = 0; j < P; ++j) alpha(j) = exp_mean100(g);

  std::vector<double> times(static_cast<std::size_t>(N));
  for (int c = 0; c < N; ++c) times[static_cast<std::size_t>(c)] = U01(g);

  Eigen::MatrixXd x(N, q);
  for (int c = 0; c < N; ++c)
    for (int k = 0; k < q; ++k) x(c, k) = 100.0 + 50.0 * N01(g);

  Eigen::MatrixXd a(P, n), b(P, n);
  for (int j = 0; j < P; ++j)
    for (int i = 0; i < n; ++i) a(j, i) = alpha(j) / 10.0 * N01(g);
  for (int j = 0; j < P; ++j)
    for (int i = 0; i < n; ++i) b(j, i) = N01(g);

  Eigen::MatrixXd eps(P, N);
  for (int j = 0; j < P; ++j)
    for (int c = 0; c < N; ++c) eps(j, c) = alpha(j) * N01(g);

  Eigen::VectorXd xsum = x.rowwise().sum();
  Eigen::MatrixXd mu(P, N);
  for (int j = 0; j < P; ++j) {
    double sum_eta = 0;
    for (int c = 0; c < N; ++c) {
      double eta = a(j, c / ni) + alpha(j) + xsum(c) + eps(j, c);
      mu(j, c) = eta; // hold eta until the scale is known
      sum_eta += eta;
    }
    const double scale = eta_scale(sum_eta, N, P);
    for (int c = 0; c < N; ++c) {
      double t = times[static_cast<std::size_t>(c)];
      // Negative means would make the log transform undefined; treat them
      // as zero expression on both sides of the normalization.
      mu(j, c) = std::max(mu(j, c) * scale + b(j, c / ni) * t + cfg.beta * t,
                          0.0);
    }
  }

  // Per-gene, per-occasion normalizer, taken before the time sort so the
  // o-th measurements across subjects form one group.
  Eigen::MatrixXd y(P, N);
  for (int j = 0; j < P; ++j) {
    for (int o = 0; o < ni; ++o) {
      double denom = 1.0;
      for (int i = 0; i < n; ++i) denom += mu(j, i * ni + o);
      for (int i = 0; i < n; ++i) {
        int c = i * ni + o;
        y(j, c) = std::log((mu(j, c) + 0.5) * 1e6 / denom);
      }
    }
  }

  auto ord = time_order(times, n, ni);
  SimDataset ds;
  ds.y.resize(P, N);
  std::vector<double> tsorted(static_cast<std::size_t>(N));
  Eigen::MatrixXd xsorted(N, q);
  for (int c = 0; c < N; ++c) {
    auto s = ord[static_cast<std::size_t>(c)];
    ds.y.col(c) = y.col(static_cast<Eigen::Index>(s));
    tsorted[static_cast<std::size_t>(c)] = times[s];
    xsorted.row(c) = x.row(static_cast<Eigen::Index>(s));
  }

  ds.design = make_design(subject_names(n), even_offsets(n, ni), tsorted,
                          xsorted);
  ds.test_set = leading_set(cfg.p);
  if (cfg.counts) {
    ds.has_counts = true;
    ds.counts = ds.y.array().ceil().max(1.0);
  }
  return ds;
}

SimDataset gen_negbin(const NegbinConfig& cfg, std::uint64_t seed,
                      std::uint32_t rep) {
  check_dims(cfg.n, cfg.n_i, cfg.P, cfg.p);
  const int n = cfg.n, ni = cfg.n_i, P = cfg.P;
  const int N = n * ni;

  Philox g = replicate_rng(seed, rep);
  std::normal_distribution<double> N01;
  std::uniform_real_distribution<double> U01(0.0, 1.0);
  std::exponential_distribution<double> exp_mean10(0.1);

  Eigen::VectorXd x(n), a0(n), bi(n);
  for (int i = 0; i < n; ++i) {
    double mu_x = exp_mean10(g);
    x(i) = mu_x + N01(g);
    a0(i) = N01(g);
    bi(i) = N01(g);
  }

  std::vector<double> times(static_cast<std::size_t>(N));
  for (int c = 0; c < N; ++c) times[static_cast<std::size_t>(c)] = U01(g);

  Eigen::VectorXd beta_j(P);
  for (int j = 0; j < P; ++j) beta_j(j) = N01(g);

  Eigen::MatrixXd counts(P, N);
  for (int j = 0; j < P; ++j)
    for (int c = 0; c < N; ++c) {
      int i = c / ni;
      double t = times[static_cast<std::size_t>(c)];
      double mu = 1001.0 + a0(i) + x(i) +
                  (bi(i) + cfg.beta + beta_j(j)) * t * x(i);
      counts(j, c) = draw_negbin(std::max(mu, 0.0), 1.0, g);
    }

  auto ord = time_order(times, n, ni);
  SimDataset ds;
  ds.has_counts = true;
  ds.counts.resize(P, N);
  std::vector<double> tsorted(static_cast<std::size_t>(N));
  Eigen::MatrixXd cov(N, 1);
  for (int c = 0; c < N; ++c) {
    auto s = ord[static_cast<std::size_t>(c)];
    ds.counts.col(c) = counts.col(static_cast<Eigen::Index>(s));
    tsorted[static_cast<std::size_t>(c)] = times[s];
    cov(c, 0) = x(c / ni);
  }
  ds.design = make_design(subject_names(n), even_offsets(n, ni), tsorted, cov);
  ds.test_set = leading_set(cfg.p);
  return ds;
}

double BaselineMu::draw(Philox& g) const {
  if (values.empty()) {
    std::normal_distribution<double> N01;
    double mu = std::exp2(4.0 + 2.0 * N01(g));
    return std::min(std::max(mu, 1.0), 1e5);
  }
  std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
  return values[pick(g)];
}

BaselineMu read_baseline_mu(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open baseline file " + path);
  BaselineMu base;
  std::string tok;
  while (in >> tok) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw ValidationError("baseline file " + path +
                            ": non-numeric entry '" + tok + "'");
    }
    if (used != tok.size())
      throw ValidationError("baseline file " + path +
                            ": non-numeric entry '" + tok + "'");
    if (!std::isfinite(v) || v <= 0)
      throw ValidationError("baseline file " + path +
                            ": means must be finite and positive");
    base.values.push_back(v);
  }
  if (base.values.empty())
    throw ValidationError("baseline file " + path + " holds no values");
  return base;
}

double draw_gamma(double shape, double scale, Philox& g) {
  std::gamma_distribution<double> d(shape, scale);
  return d(g);
}

double draw_poisson(double mean, Philox& g) {
  if (mean <= 0) return 0;
  std::poisson_distribution<long long> d(mean);
  return static_cast<double>(d(g));
}

double draw_negbin(double mu, double dispersion, Philox& g) {
  if (mu <= 0) return 0;
  if (dispersion <= 0) throw ValidationError("dispersion must be positive");
  double lambda = draw_gamma(1.0 / dispersion, dispersion * mu, g);
  return draw_poisson(lambda, g);
}

double draw_poisson_gamma(double mu_total, double mu_baseline, Philox& g) {
  if (mu_total <= 0 || mu_baseline <= 0)
    throw ValidationError(
        "Poisson-Gamma rate mean must be positive (time trend too negative)");
  const double m = 0.2 + 1.0 / std::sqrt(mu_baseline);
  const double kappa = draw_gamma(20.0, 2.0, g); // chi-squared with 40 df
  // Shape kappa/(40m) with scale chosen so the mixed mean is mu_total.
  double lambda = draw_gamma(kappa / (40.0 * m), 40.0 * m * mu_total / kappa, g);
  return draw_poisson(lambda, g);
}

SimDataset gen_poisson_gamma(const PoissonGammaConfig& cfg,
                             const BaselineMu& baseline, std::uint64_t seed,
                             std::uint32_t rep) {
  check_dims(cfg.n, cfg.n_i, cfg.P, cfg.p);
  if (cfg.heterogeneous && cfg.sigma_gamma < 0)
    throw ValidationError("sigma_gamma must be nonnegative");
  const int n = cfg.n, ni = cfg.n_i, P = cfg.P, p = cfg.p;
  const int N = n * ni;

  Philox g = replicate_rng(seed, rep);
  std::normal_distribution<double> N01;

  Eigen::VectorXd base(P);
  for (int j = 0; j < P; ++j) base(j) = baseline.draw(g);

  // Set genes load on one latent factor per subject, which puts the
  // population correlation of their mean vectors near 0.92; the other
  // genes vary independently with the same marginal law.
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) z(i) = N01(g);
  Eigen::MatrixXd mu(P, n);
  for (int j = 0; j < P; ++j)
    for (int i = 0; i < n; ++i) {
      double shared = j < p ? z(i) : N01(g);
      double lm = std::log(base(j)) + 0.8 * shared + 0.2 * N01(g);
      mu(j, i) = std::min(std::max(std::exp(lm), 1.0), 1e5);
    }

  Eigen::MatrixXd counts(P, N);
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < ni; ++o) {
      double t = o + 1.0;
      for (int j = 0; j < P; ++j) {
        double mu_total =
            cfg.heterogeneous ? mu(j, i) : mu(j, i) + cfg.beta * t;
        counts(j, i * ni + o) = draw_poisson_gamma(mu_total, mu_total, g);
      }
    }

  std::vector<double> times(static_cast<std::size_t>(N));
  for (int c = 0; c < N; ++c)
    times[static_cast<std::size_t>(c)] = c % ni + 1.0;

  SimDataset ds;
  ds.design = make_design(subject_names(n), even_offsets(n, ni), times,
                          Eigen::MatrixXd(N, 0));
  ds.test_set = leading_set(p);

  if (!cfg.heterogeneous) {
    ds.has_counts = true;
    ds.counts = std::move(counts);
    return ds;
  }

  // Per-gene random time slopes on the log scale plus white noise; the
  // result is already-normalized expression, not counts.
  Eigen::VectorXd gamma(P);
  for (int j = 0; j < P; ++j)
    gamma(j) = std::sqrt(cfg.sigma_gamma) * N01(g);
  Eigen::RowVectorXd lib = counts.colwise().sum();
  ds.y.resize(P, N);
  for (int c = 0; c < N; ++c) {
    double t = times[static_cast<std::size_t>(c)];
    for (int j = 0; j < P; ++j)
      ds.y(j, c) = std::log((counts(j, c) + 0.5) * 1e6 / (lib(c) + 1.0)) +
                   gamma(j) * t + std::sqrt(0.05) * N01(g);
  }
  return ds;
}

namespace {

std::vector<double> default_grid(const StudyConfig& cfg) {
  if (cfg.regime == "misspecified")
    return {0, 0.5, 0.75, 1, 1.25, 1.5, 2};
  if (cfg.regime == "negbin") return {-2, -1, -0.5, 0, 0.5, 1, 2};
  if (cfg.heterogeneous)
    return {0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3};
  return {0, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
}

// Distinct permutation seed per replicate so permutation draws are not
// shared across replicates (splitmix increment).
std::uint64_t rep_seed(std::uint64_t seed, int rep) {
  return seed + (static_cast<std::uint64_t>(rep) + 1) * 0x9E3779B97F4A7C15ULL;
}

struct RepOutcome {
  bool asym = false;
  bool perm = false;
};

} // namespace

double StudyRow::se() const {
  if (replicates <= 0) return 0;
  double r = rate();
  return std::sqrt(r * (1 - r) / replicates);
}

std::vector<StudyRow> run_study(const StudyConfig& cfg) {
  if (cfg.replicates < 1)
    throw ValidationError("replicate count must be >= 1");
  if (!(cfg.level > 0 && cfg.level < 1))
    throw ValidationError("level must lie in (0,1)");
  if (cfg.strategies.empty())
    throw ValidationError("at least one weight strategy is required");
  if (cfg.regime != "misspecified" && cfg.regime != "negbin" &&
      cfg.regime != "poisson_gamma")
    throw ValidationError("unknown regime " + cfg.regime);
  if (cfg.n < 0 || cfg.n_i < 0 || cfg.P < 0 || cfg.p < 0)
    throw ValidationError("dimension overrides must be positive");

  const std::vector<double> grid =
      cfg.grid.empty() ? default_grid(cfg) : cfg.grid;
  const bool want_asym = cfg.test != TestKind::Permutation;
  const bool want_perm = cfg.test != TestKind::Asymptotic;
  const TimeBasis basis = TimeBasis::linear();

  auto generate = [&](double param, std::uint32_t rep) {
    if (cfg.regime == "misspecified") {
      MisspecifiedConfig mc;
      if (cfg.n) mc.n = cfg.n;
      if (cfg.n_i) mc.n_i = cfg.n_i;
      if (cfg.P) mc.P = cfg.P;
      if (cfg.p) mc.p = cfg.p;
      mc.beta = param;
      mc.counts = cfg.counts;
      return gen_misspecified(mc, cfg.seed, rep);
    }
    if (cfg.regime == "negbin") {
      NegbinConfig nc;
      if (cfg.n) nc.n = cfg.n;
      if (cfg.n_i) nc.n_i = cfg.n_i;
      if (cfg.P) nc.P = cfg.P;
      if (cfg.p) nc.p = cfg.p;
      nc.beta = param;
      return gen_negbin(nc, cfg.seed, rep);
    }
    PoissonGammaConfig pc;
    if (cfg.n) pc.n = cfg.n;
    if (cfg.n_i) pc.n_i = cfg.n_i;
    if (cfg.P) pc.P = cfg.P;
    if (cfg.p) pc.p = cfg.p;
    pc.heterogeneous = cfg.heterogeneous;
    if (cfg.heterogeneous)
      pc.sigma_gamma = param;
    else
      pc.beta = param;
    return gen_poisson_gamma(pc, cfg.baseline, cfg.seed, rep);
  };

  std::vector<StudyRow> rows;
  for (double param : grid) {
    std::vector<std::vector<RepOutcome>> slots(
        static_cast<std::size_t>(cfg.replicates),
        std::vector<RepOutcome>(cfg.strategies.size()));
    parallel_for(static_cast<std::size_t>(cfg.replicates), [&](std::size_t r) {
      SimDataset ds = generate(param, static_cast<std::uint32_t>(r));
      NormalizedMatrix norm;
      if (ds.has_counts) {
        CountMatrix cm;
        cm.counts = ds.counts;
        cm.gene_ids.resize(static_cast<std::size_t>(ds.counts.rows()));
        for (std::size_t j = 0; j < cm.gene_ids.size(); ++j)
          cm.gene_ids[j] = "g" + std::to_string(j + 1);
        cm.sample_ids = ds.design.sample_ids;
        norm = log_cpm(cm);
      } else {
        norm = preprocessed(ds.y);
      }
      for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
        AnalysisOptions opt;
        opt.weights = cfg.strategies[s];
        opt.mode = SetMode::Heterogeneous;
        opt.test = cfg.test;
        opt.permutations = cfg.B;
        opt.pperm_add_one = cfg.pperm_add_one;
        opt.seed = rep_seed(cfg.seed, static_cast<int>(r));
        opt.level = cfg.level;
        TestResult tr = run_gene_set_tests(norm, ds.design, basis,
                                           {ds.test_set}, opt)
                            .front();
        RepOutcome& out = slots[r][s];
        if (tr.p_asymptotic) out.asym = *tr.p_asymptotic < cfg.level;
        if (tr.p_permutation) out.perm = *tr.p_permutation < cfg.level;
      }
    });
    for (std::size_t s = 0; s < cfg.strategies.size(); ++s) {
      auto make_row = [&](TestKind kind, bool RepOutcome::*field) {
        StudyRow row;
        row.param = param;
        row.strategy = cfg.strategies[s];
        row.test = kind;
        row.replicates = cfg.replicates;
        for (int r = 0; r < cfg.replicates; ++r)
          row.rejections += slots[static_cast<std::size_t>(r)][s].*field;
        rows.push_back(row);
      };
      if (want_asym) make_row(TestKind::Asymptotic, &RepOutcome::asym);
      if (want_perm) make_row(TestKind::Permutation, &RepOutcome::perm);
    }
  }
  return rows;
}

} // namespace vcgsa
