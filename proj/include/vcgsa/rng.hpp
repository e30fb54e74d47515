#pragma once

#include <cstdint>
#include <limits>

namespace vcgsa {

// Philox4x32-10 counter-based generator. A stream is identified by
// (seed, s0, s1, s2); draws within a stream walk a 32-bit block counter.
// Streams with distinct identifiers are statistically independent, which
// lets permutation b of subject i use stream (seed, kStreamPermutation, b, i)
// and get the same draws no matter which thread asks, or in what order.
class Philox {
public:
  using result_type = std::uint64_t;

  Philox(std::uint64_t seed, std::uint32_t s0, std::uint32_t s1,
         std::uint32_t s2) noexcept
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        s0_(s0), s1_(s1), s2_(s2) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  // One 10-round block: ctr/key in, four output words out.
  static void block(const std::uint32_t ctr[4], std::uint32_t k0,
                    std::uint32_t k1, std::uint32_t out[4]) noexcept {
    std::uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = std::uint64_t(0xD2511F53u) * c0;
      std::uint64_t p1 = std::uint64_t(0xCD9E8D57u) * c2;
      std::uint32_t hi0 = std::uint32_t(p0 >> 32);
      std::uint32_t lo0 = std::uint32_t(p0);
      std::uint32_t hi1 = std::uint32_t(p1 >> 32);
      std::uint32_t lo1 = std::uint32_t(p1);
      std::uint32_t n0 = hi1 ^ c1 ^ k0;
      std::uint32_t n2 = hi0 ^ c3 ^ k1;
      c0 = n0; c1 = lo1; c2 = n2; c3 = lo0;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    out[0] = c0; out[1] = c1; out[2] = c2; out[3] = c3;
  }

  result_type operator()() noexcept {
    if (have_) {
      have_ = false;
      return spare_;
    }
    const std::uint32_t ctr[4] = {pos_++, s0_, s1_, s2_};
    std::uint32_t out[4];
    block(ctr, key0_, key1_, out);
    spare_ = (std::uint64_t(out[2]) << 32) | out[3];
    have_ = true;
    return (std::uint64_t(out[0]) << 32) | out[1];
  }

private:
  std::uint32_t key0_, key1_;
  std::uint32_t s0_, s1_, s2_;
  std::uint32_t pos_ = 0;
  std::uint64_t spare_ = 0;
  bool have_ = false;
};

// Stream tags keep draw sequences for unrelated purposes disjoint even when
// they share the user seed.
inline constexpr std::uint32_t kStreamPermutation = 1;
inline constexpr std::uint32_t kStreamReplicate = 2;
inline constexpr std::uint32_t kStreamPvalueMC = 3;

inline Philox permutation_rng(std::uint64_t seed, std::uint32_t b,
                              std::uint32_t subject) noexcept {
  return Philox(seed, kStreamPermutation, b, subject);
}

inline Philox replicate_rng(std::uint64_t seed, std::uint32_t rep) noexcept {
  return Philox(seed, kStreamReplicate, rep, 0);
}

} // namespace vcgsa
