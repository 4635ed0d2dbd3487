#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>

namespace blockwords {

/// SplitMix64 generator. Satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) noexcept {
  SplitMix64 g(a ^ (b * 0xD1342543DE82EF95ull + 0x2545F4914F6CDD1Dull));
  g();
  return g();
}

/// Counter-based stream: the draws for (seed, step, slot) never depend on
/// how many draws other slots consumed, so runs reproduce under any schedule.
inline SplitMix64 stream_for(std::uint64_t seed, std::uint64_t step, std::uint64_t slot) noexcept {
  return SplitMix64(mix64(mix64(seed, step), slot));
}

/// Uniform double in [0, 1) with 53 random bits.
template <class Rng>
double uniform01(Rng& rng) {
  static_assert(Rng::max() == std::numeric_limits<std::uint64_t>::max() && Rng::min() == 0,
                "uniform01 needs a full-range 64-bit generator");
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Draws an index with probability proportional to `weights` (non-negative,
/// positive sum).
template <class Rng>
std::size_t sample_index(std::span<const double> weights, Rng& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::invalid_argument("sample_index: weights sum to zero");
  double u = uniform01(rng) * total;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = i;
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return last_positive;
}

}  // namespace blockwords
