#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "vcgsa/data_model.hpp"
#include "vcgsa/rng.hpp"

namespace vcgsa {

// One simulated dataset: either a continuous expression matrix (y) or an
// integer count matrix, in canonical design order, plus the tested set.
struct SimDataset {
  Eigen::MatrixXd y;      // P x N, continuous scale; empty when counts-only
  bool has_counts = false;
  Eigen::MatrixXd counts; // P x N, integral entries
  LongitudinalDesign design;
  GeneSet test_set;
};

// Deliberately misspecified continuous regime: every gene shares a mean
// structure driven by three observation-level covariates, the noise scale is
// tied to the gene mean (so the variance trend is real), and a random
// subject slope plus the fixed effect beta act on time.
struct MisspecifiedConfig {
  int n = 200;
  int n_i = 3;
  int P = 1000;
  int p = 10;
  double beta = 0;
  bool counts = false; // ceil to positive integers
};

SimDataset gen_misspecified(const MisspecifiedConfig& cfg, std::uint64_t seed,
                            std::uint32_t rep);

// Negative binomial regime: counts with dispersion 1 and a subject-level
// covariate interacting with time.
struct NegbinConfig {
  int n = 50;
  int n_i = 3;
  int P = 100;
  int p = 10;
  double beta = 0;
};

SimDataset gen_negbin(const NegbinConfig& cfg, std::uint64_t seed,
                      std::uint32_t rep);

// Baseline expression means for the Poisson-Gamma regime. Empty values draw
// from a truncated log-normal (log2 mean 4, sd 2, clamped to [1, 1e5]);
// otherwise draws resample the supplied pool.
struct BaselineMu {
  std::vector<double> values;
  double draw(Philox& g) const;
};

BaselineMu read_baseline_mu(const std::string& path);

// Poisson-Gamma regime: Poisson counts with Gamma-mixed rates whose
// dispersion shrinks with abundance, resembling real sequencing data. Genes
// in the test set share a latent per-subject factor so their mean vectors
// are strongly correlated. beta shifts the rate mean linearly in time; the
// heterogeneous variant instead adds a per-gene random time slope (variance
// sigma_gamma) plus white noise on the log scale.
struct PoissonGammaConfig {
  int n = 6;
  int n_i = 3;
  int P = 300;
  int p = 30;
  double beta = 0;
  bool heterogeneous = false;
  double sigma_gamma = 0;
};

SimDataset gen_poisson_gamma(const PoissonGammaConfig& cfg,
                             const BaselineMu& baseline, std::uint64_t seed,
                             std::uint32_t rep);

// Raw draw helpers, exposed for moment checks.
double draw_gamma(double shape, double scale, Philox& g);
double draw_poisson(double mean, Philox& g);
// Negative binomial via a Gamma-mixed Poisson: mean mu, variance
// mu + dispersion * mu^2.
double draw_negbin(double mu, double dispersion, Philox& g);
// One Poisson-Gamma count at rate mean mu_total with the dispersion profile
// anchored at baseline mean mu_baseline (returns a; E[a] = mu_total).
double draw_poisson_gamma(double mu_total, double mu_baseline, Philox& g);

// Monte Carlo driver.
struct StudyConfig {
  std::string regime = "misspecified"; // misspecified | negbin | poisson_gamma
  std::vector<double> grid;            // beta (or sigma_gamma) values
  int replicates = 1000;
  double level = 0.05;
  std::uint64_t seed = 12345;
  std::vector<WeightStrategy> strategies = {WeightStrategy::GeneLevel};
  TestKind test = TestKind::Asymptotic;
  int B = 200;
  bool pperm_add_one = false;
  // dimension overrides; 0 keeps the regime default
  int n = 0, n_i = 0, P = 0, p = 0;
  bool counts = false;
  bool heterogeneous = false;
  BaselineMu baseline;
};

struct StudyRow {
  double param = 0;
  WeightStrategy strategy = WeightStrategy::GeneLevel;
  TestKind test = TestKind::Asymptotic; // Asymptotic or Permutation
  int replicates = 0;
  int rejections = 0;

  double rate() const {
    return replicates ? double(rejections) / replicates : 0;
  }
  double se() const; // sqrt(r(1-r)/replicates)
};

std::vector<StudyRow> run_study(const StudyConfig& cfg);

} // namespace vcgsa
