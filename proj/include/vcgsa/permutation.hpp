#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "vcgsa/vcscore.hpp"

namespace vcgsa {

// Index permutation of [0, N) that shuffles positions within each subject
// block and leaves blocks in place. Permutation b of subject i draws from
// its own counter stream, so the result depends only on (seed, b, design),
// not on execution order.
std::vector<std::size_t> within_subject_permutation(
    const LongitudinalDesign& design, std::uint64_t seed, std::uint32_t b);

// Basis rows rearranged by within_subject_permutation.
Eigen::MatrixXd permute_within_subjects(const Eigen::MatrixXd& basis_rows,
                                        const LongitudinalDesign& design,
                                        std::uint64_t seed, std::uint32_t b);

// B permuted statistics for one set, reusing the unpermuted null fit.
std::vector<double> permutation_statistics(
    const NullFit& nf, const Eigen::MatrixXd& basis_rows,
    const LongitudinalDesign& design, const Eigen::MatrixXd* sigma_xi_half,
    SetMode mode, int B, std::uint64_t seed);

// p = #{Q <= Q*_b} / B; add_one switches to (1 + #) / (1 + B).
double permutation_pvalue(double Q, const std::vector<double>& qstar,
                          bool add_one);

// One-set convenience over raw counts.
TestResult permutation_test(const CountMatrix& counts,
                            const std::vector<SampleInfo>& meta,
                            const GeneSet& set, const TimeBasis& basis,
                            WeightStrategy ws, SetMode mode, int B,
                            std::uint64_t seed);

} // namespace vcgsa
