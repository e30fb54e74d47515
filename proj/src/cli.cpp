#include "vcgsa/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "vcgsa/errors.hpp"
#include "vcgsa/io.hpp"
#include "vcgsa/meanvar.hpp"
#include "vcgsa/normalize.hpp"
#include "vcgsa/parallel.hpp"
#include "vcgsa/simulate.hpp"
#include "vcgsa/vcscore.hpp"

namespace vcgsa {

namespace {

WeightStrategy parse_weights(const std::string& s) {
  if (s == "gene") return WeightStrategy::GeneLevel;
  if (s == "obs") return WeightStrategy::ObservationLevel;
  if (s == "voom") return WeightStrategy::Voom;
  if (s == "identity") return WeightStrategy::Identity;
  throw ValidationError("unknown weight strategy " + s);
}

SetMode parse_mode(const std::string& s) {
  if (s == "hetero") return SetMode::Heterogeneous;
  if (s == "homo") return SetMode::Homogeneous;
  throw ValidationError("unknown mode " + s);
}

TestKind parse_test(const std::string& s) {
  if (s == "asymptotic") return TestKind::Asymptotic;
  if (s == "permutation") return TestKind::Permutation;
  if (s == "both") return TestKind::Both;
  throw ValidationError("unknown test kind " + s);
}

Kernel parse_kernel(const std::string& s) {
  if (s == "gaussian") return Kernel::Gaussian;
  if (s == "epanechnikov") return Kernel::Epanechnikov;
  throw ValidationError("unknown kernel " + s);
}

std::string utc_now() {
  auto t = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write to " + path);
  out << text;
  out.close();
  if (!out) throw ValidationError("cannot write to " + path);
}

// Shared analysis flags for the test and inspect subcommands.
struct TestFlags {
  std::string counts_path, meta_path, sets_path, out_path = "results.tsv";
  std::string weights = "gene", mode = "hetero", test = "asymptotic";
  std::string basis = "linear", kernel = "gaussian";
  double bandwidth = 0, level = 0.05;
  int permutations = 1000, threads = 0;
  std::uint64_t seed = 12345;
  bool pperm_add_one = false, perm_recompute_weights = false;
};

void add_smoothing_flags(CLI::App* cmd, TestFlags& f) {
  cmd->add_option("--weights", f.weights,
                  "variance weighting: gene, obs, voom or identity")
      ->check(CLI::IsMember({"gene", "obs", "voom", "identity"}))
      ->capture_default_str();
  cmd->add_option("--bandwidth", f.bandwidth,
                  "fixed smoother bandwidth (default: cross-validated)")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--kernel", f.kernel, "smoother kernel")
      ->check(CLI::IsMember({"gaussian", "epanechnikov"}))
      ->capture_default_str();
  cmd->add_option("--basis", f.basis,
                  "time basis: linear, poly:<degree> or spline:<knots>")
      ->capture_default_str();
  cmd->add_option("--threads", f.threads, "worker thread cap (0 = all cores)")
      ->check(CLI::NonNegativeNumber);
}

// The smoother knobs only make sense when a variance trend is estimated,
// and permutation knobs only when permutations are drawn; both are checked
// against the resolved values so config files are covered too.
void check_exclusions(const CLI::App* cmd, const TestFlags& f) {
  auto given = [&](const std::string& name) {
    const CLI::Option* o =
        const_cast<CLI::App*>(cmd)->get_option_no_throw(name);
    return o && o->count() > 0;
  };
  const bool smoothed = f.weights == "gene" || f.weights == "obs";
  if (!smoothed && given("--bandwidth"))
    throw ValidationError("--bandwidth requires --weights gene or obs");
  if (!smoothed && given("--kernel"))
    throw ValidationError("--kernel requires --weights gene or obs");
  if (f.test == "asymptotic") {
    if (given("--permutations"))
      throw ValidationError(
          "--permutations requires --test permutation or both");
    if (given("--pperm-add-one"))
      throw ValidationError(
          "--pperm-add-one requires --test permutation or both");
  }
}

int cmd_test(const CLI::App* cmd, const TestFlags& f) {
  check_exclusions(cmd, f);
  if (f.threads > 0) set_max_threads(static_cast<std::size_t>(f.threads));

  CountMatrix counts = read_counts_tsv(f.counts_path);
  std::vector<SampleInfo> meta = read_meta_tsv(f.meta_path);
  LongitudinalDesign design = validate_dataset(counts, meta);
  NormalizedMatrix norm = log_cpm(counts, design);
  TimeBasis basis = TimeBasis::parse(f.basis, design.times);

  GmtResult gmt = read_gmt(f.sets_path, counts.gene_ids);
  for (const auto& w : gmt.warnings) std::cerr << "warning: " << w << '\n';
  if (gmt.sets.empty())
    throw ValidationError("no testable gene sets after matching");

  AnalysisOptions opt;
  opt.weights = parse_weights(f.weights);
  opt.mode = parse_mode(f.mode);
  opt.test = parse_test(f.test);
  opt.kernel = parse_kernel(f.kernel);
  opt.bandwidth = f.bandwidth;
  opt.permutations = f.permutations;
  opt.seed = f.seed;
  opt.level = f.level;
  opt.pperm_add_one = f.pperm_add_one;
  opt.perm_recompute_weights = f.perm_recompute_weights;

  if (design.n_subjects() < 30 && opt.test != TestKind::Permutation)
    std::cerr << "advisory: only " << design.n_subjects()
              << " subjects; the asymptotic approximation may be unreliable "
                 "below 30, consider --test permutation\n";

  std::vector<TestResult> results =
      run_gene_set_tests(norm, design, basis, gmt.sets, opt);

  RunMeta rm;
  rm.seed = f.seed;
  rm.timestamp = utc_now();
  rm.flags = {{"subcommand", "test"},
              {"counts", f.counts_path},
              {"meta", f.meta_path},
              {"sets", f.sets_path},
              {"weights", f.weights},
              {"mode", f.mode},
              {"test", f.test},
              {"basis", f.basis},
              {"kernel", f.kernel},
              {"bandwidth", format_number(f.bandwidth)},
              {"permutations", std::to_string(f.permutations)},
              {"level", format_number(f.level)}};
  write_results(results, f.out_path, rm);

  int significant = 0;
  for (const TestResult& tr : results) {
    double p = tr.p_permutation ? *tr.p_permutation
                                : tr.p_asymptotic.value_or(1.0);
    if (p < f.level) ++significant;
  }
  std::cout << "sets tested: " << results.size() << '\n'
            << "significant at " << format_number(f.level) << ": "
            << significant << '\n'
            << "results written to " << f.out_path << '\n';
  return 0;
}

int cmd_inspect(const CLI::App* cmd, const TestFlags& f,
                const std::string& what) {
  check_exclusions(cmd, f);
  if (f.threads > 0) set_max_threads(static_cast<std::size_t>(f.threads));

  CountMatrix counts = read_counts_tsv(f.counts_path);
  std::vector<SampleInfo> meta = read_meta_tsv(f.meta_path);
  LongitudinalDesign design = validate_dataset(counts, meta);
  NormalizedMatrix norm = log_cpm(counts, design);
  TimeBasis basis = TimeBasis::parse(f.basis, design.times);

  std::ostringstream out;
  auto matrix_tsv = [&](const Eigen::MatrixXd& m) {
    out << "gene_id";
    for (const auto& s : design.sample_ids) out << '\t' << s;
    out << '\n';
    for (Eigen::Index j = 0; j < m.rows(); ++j) {
      out << counts.gene_ids[static_cast<std::size_t>(j)];
      for (Eigen::Index c = 0; c < m.cols(); ++c)
        out << '\t' << format_number(m(j, c));
      out << '\n';
    }
  };

  if (what == "normalized") {
    matrix_tsv(norm.y);
  } else if (what == "weights") {
    AnalysisOptions opt;
    opt.weights = parse_weights(f.weights);
    opt.kernel = parse_kernel(f.kernel);
    opt.bandwidth = f.bandwidth;
    Eigen::MatrixXd w;
    switch (opt.weights) {
      case WeightStrategy::Identity:
        w = Eigen::MatrixXd::Ones(norm.y.rows(), norm.y.cols());
        break;
      case WeightStrategy::Voom:
        w = voom_weights(norm, design, basis);
        break;
      default: {
        MeanVarOptions mv;
        mv.kernel = opt.kernel;
        mv.level = opt.weights == WeightStrategy::GeneLevel
                       ? SmoothLevel::Gene
                       : SmoothLevel::Observation;
        mv.bandwidth = opt.bandwidth;
        w = variance_weights(fit_genes_batch(norm.y, design, basis), design,
                             mv)
                .weights;
      }
    }
    matrix_tsv(w);
  } else if (what == "meanvar") {
    MeanVarOptions mv;
    mv.kernel = parse_kernel(f.kernel);
    mv.bandwidth = f.bandwidth;
    VarianceWeights vw =
        variance_weights(fit_genes_batch(norm.y, design, basis), design, mv);
    out << "# bandwidth " << format_number(vw.bandwidth) << '\n';
    out << "gene_id\tmean\tvariance\tweight\n";
    for (std::size_t j = 0; j < vw.point_m.size(); ++j)
      out << counts.gene_ids[j] << '\t' << format_number(vw.point_m[j])
          << '\t' << format_number(vw.point_v[j]) << '\t'
          << format_number(vw.weights(static_cast<Eigen::Index>(j), 0))
          << '\n';
  } else {
    throw ValidationError("unknown inspect target " + what);
  }
  write_text(f.out_path, out.str());
  return 0;
}

struct SimFlags {
  std::string regime = "misspecified", out_path = "study.csv";
  std::string baseline_path;
  std::vector<double> grid;
  std::vector<std::string> weights = {"gene"};
  std::string test = "asymptotic";
  int replicates = 1000, B = 200, threads = 0;
  int n = 0, n_i = 0, P = 0, p = 0;
  double level = 0.05;
  std::uint64_t seed = 12345;
  bool pperm_add_one = false, counts = false, heterogeneous = false;
};

int cmd_simulate(const SimFlags& f) {
  if (f.threads > 0) set_max_threads(static_cast<std::size_t>(f.threads));
  StudyConfig cfg;
  cfg.regime = f.regime;
  cfg.grid = f.grid;
  cfg.replicates = f.replicates;
  cfg.level = f.level;
  cfg.seed = f.seed;
  cfg.strategies.clear();
  for (const auto& w : f.weights) cfg.strategies.push_back(parse_weights(w));
  cfg.test = parse_test(f.test);
  cfg.B = f.B;
  cfg.pperm_add_one = f.pperm_add_one;
  cfg.n = f.n;
  cfg.n_i = f.n_i;
  cfg.P = f.P;
  cfg.p = f.p;
  cfg.counts = f.counts;
  cfg.heterogeneous = f.heterogeneous;
  if (!f.baseline_path.empty())
    cfg.baseline = read_baseline_mu(f.baseline_path);

  std::vector<StudyRow> rows = run_study(cfg);
  write_study_csv(rows, f.out_path);
  std::cout << "wrote " << rows.size() << " rows to " << f.out_path << '\n';
  return 0;
}

} // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{
      "Variance component score tests for longitudinal expression changes "
      "in gene sets"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; flags take priority");

  TestFlags tf;
  CLI::App* test = app.add_subcommand("test", "run gene set tests on data");
  test->add_option("--counts", tf.counts_path, "counts TSV")->required();
  test->add_option("--meta", tf.meta_path, "sample metadata TSV")->required();
  test->add_option("--sets", tf.sets_path, "gene sets in GMT format")
      ->required();
  test->add_option("--out", tf.out_path, "output TSV path")
      ->capture_default_str();
  test->add_option("--mode", tf.mode, "set effect structure")
      ->check(CLI::IsMember({"hetero", "homo"}))
      ->capture_default_str();
  test->add_option("--test", tf.test, "p-value construction")
      ->check(CLI::IsMember({"asymptotic", "permutation", "both"}))
      ->capture_default_str();
  test->add_option("--permutations", tf.permutations, "permutation count B")
      ->check(CLI::PositiveNumber);
  test->add_flag("--pperm-add-one", tf.pperm_add_one,
                 "use (1+count)/(1+B) for the permutation p-value");
  test->add_flag("--perm-recompute-weights", tf.perm_recompute_weights,
                 "recompute variance weights inside each permutation");
  test->add_option("--seed", tf.seed, "RNG seed")->capture_default_str();
  test->add_option("--level", tf.level, "test level alpha")
      ->check(CLI::Range(1e-12, 1.0))
      ->capture_default_str();
  add_smoothing_flags(test, tf);

  TestFlags insf;
  std::string what = "normalized";
  CLI::App* inspect = app.add_subcommand(
      "inspect", "dump normalized values, weights or the variance trend");
  inspect->add_option("--counts", insf.counts_path, "counts TSV")->required();
  inspect->add_option("--meta", insf.meta_path, "sample metadata TSV")
      ->required();
  inspect->add_option("--what", what, "normalized, weights or meanvar")
      ->check(CLI::IsMember({"normalized", "weights", "meanvar"}))
      ->capture_default_str();
  inspect->add_option("--out", insf.out_path, "output path (- for stdout)")
      ->default_val(std::string("-"));
  add_smoothing_flags(inspect, insf);

  SimFlags sf;
  CLI::App* sim =
      app.add_subcommand("simulate", "rejection-rate studies on synthetic data");
  sim->add_option("--regime", sf.regime, "data generating regime")
      ->check(CLI::IsMember({"misspecified", "negbin", "poisson_gamma"}))
      ->capture_default_str();
  sim->add_option("--beta-grid", sf.grid,
                  "effect sizes (sigma_gamma grid when --heterogeneous)")
      ->delimiter(',');
  sim->add_option("--replicates", sf.replicates, "Monte Carlo replicates")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sim->add_option("--level", sf.level, "test level alpha")
      ->check(CLI::Range(1e-12, 1.0))
      ->capture_default_str();
  sim->add_option("--seed", sf.seed, "RNG seed")->capture_default_str();
  sim->add_option("--weights", sf.weights,
                  "weight strategies to compare (comma separated)")
      ->delimiter(',');
  sim->add_option("--test", sf.test, "p-value construction")
      ->check(CLI::IsMember({"asymptotic", "permutation", "both"}))
      ->capture_default_str();
  sim->add_option("--permutations", sf.B, "permutation count B")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sim->add_flag("--pperm-add-one", sf.pperm_add_one,
                "use (1+count)/(1+B) for permutation p-values");
  sim->add_option("--n", sf.n, "subjects (0 = regime default)");
  sim->add_option("--ni", sf.n_i, "observations per subject (0 = default)");
  sim->add_option("--genes", sf.P, "total genes (0 = default)");
  sim->add_option("--set-size", sf.p, "tested set size (0 = default)");
  sim->add_flag("--counts", sf.counts,
                "emit integer counts (misspecified regime)");
  sim->add_flag("--heterogeneous", sf.heterogeneous,
                "per-gene random time slopes (poisson_gamma regime)");
  sim->add_option("--baseline-mu", sf.baseline_path,
                  "TSV of empirical baseline means");
  sim->add_option("--out", sf.out_path, "output CSV path")
      ->capture_default_str();
  sim->add_option("--threads", sf.threads, "worker thread cap (0 = all cores)")
      ->check(CLI::NonNegativeNumber);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (test->parsed()) return cmd_test(test, tf);
    if (inspect->parsed()) return cmd_inspect(inspect, insf, what);
    return cmd_simulate(sf);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

} // namespace vcgsa
