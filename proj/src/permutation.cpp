#include "vcgsa/permutation.hpp"

#include <numeric>
#include <random>

#include "vcgsa/errors.hpp"
#include "vcgsa/normalize.hpp"
#include "vcgsa/parallel.hpp"
#include "vcgsa/rng.hpp"

namespace vcgsa {

std::vector<std::size_t> within_subject_permutation(
    const LongitudinalDesign& design, std::uint64_t seed, std::uint32_t b) {
  std::vector<std::size_t> perm(design.n_obs());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = 0; i < design.n_subjects(); ++i) {
    const std::size_t lo = design.block_offset[i];
    const std::size_t len = design.block_size(i);
    if (len < 2) continue;
    Philox g = permutation_rng(seed, b, static_cast<std::uint32_t>(i));
    // Fisher-Yates on the block only; other subjects are untouched.
    for (std::size_t k = len - 1; k > 0; --k) {
      std::uniform_int_distribution<std::size_t> pick(0, k);
      std::swap(perm[lo + k], perm[lo + pick(g)]);
    }
  }
  return perm;
}

Eigen::MatrixXd permute_within_subjects(const Eigen::MatrixXd& basis_rows,
                                        const LongitudinalDesign& design,
                                        std::uint64_t seed, std::uint32_t b) {
  if (basis_rows.rows() != static_cast<Eigen::Index>(design.n_obs()))
    throw ValidationError("basis rows do not match design");
  auto perm = within_subject_permutation(design, seed, b);
  Eigen::MatrixXd out(basis_rows.rows(), basis_rows.cols());
  for (std::size_t r = 0; r < perm.size(); ++r)
    out.row(static_cast<Eigen::Index>(r)) =
        basis_rows.row(static_cast<Eigen::Index>(perm[r]));
  return out;
}

std::vector<double> permutation_statistics(const NullFit& nf,
                                           const Eigen::MatrixXd& basis_rows,
                                           const LongitudinalDesign& design,
                                           const Eigen::MatrixXd* sigma_xi_half,
                                           SetMode mode, int B,
                                           std::uint64_t seed) {
  if (B < 1) throw ValidationError("permutation count must be >= 1");
  std::vector<double> qstar(static_cast<std::size_t>(B));
  parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
    Eigen::MatrixXd rows = permute_within_subjects(
        basis_rows, design, seed, static_cast<std::uint32_t>(b));
    ScoreDecomposition dec = score_vector(nf.residuals, nf.weights, rows,
                                          design, sigma_xi_half, mode);
    qstar[b] = statistic(dec);
  });
  return qstar;
}

double permutation_pvalue(double Q, const std::vector<double>& qstar,
                          bool add_one) {
  if (qstar.empty()) throw ValidationError("no permutation statistics");
  std::size_t count = 0;
  for (double q : qstar)
    if (Q <= q) ++count;
  if (add_one)
    return double(1 + count) / double(1 + qstar.size());
  return double(count) / double(qstar.size());
}

TestResult permutation_test(const CountMatrix& counts,
                            const std::vector<SampleInfo>& meta,
                            const GeneSet& set, const TimeBasis& basis,
                            WeightStrategy ws, SetMode mode, int B,
                            std::uint64_t seed) {
  LongitudinalDesign design = validate_dataset(counts, meta);
  NormalizedMatrix norm = log_cpm(counts, design);
  AnalysisOptions opt;
  opt.weights = ws;
  opt.mode = mode;
  opt.test = TestKind::Permutation;
  opt.permutations = B;
  opt.seed = seed;
  return run_gene_set_tests(norm, design, basis, {set}, opt).front();
}

} // namespace vcgsa
