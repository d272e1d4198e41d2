#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>

namespace resque {

/// SplitMix64 step. Used to expand a 64-bit seed into generator state and to derive sub-seeds.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// Derives an independent seed for a named sub-stream of `base`.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) noexcept;

/// xoshiro256** 1.0 (Blackman & Vigna), seeded by four SplitMix64 outputs.
///
/// Every random draw in the library goes through this type so results do not
/// depend on the standard library's distribution implementations:
///  - uniform():       (next() >> 11) * 2^-53, in [0, 1)
///  - uniform_index(): Lemire's multiply-shift with rejection, unbiased in [0, n)
///  - normal():        Box-Muller, one value per call (the sine branch is discarded)
///  - shuffle():       Fisher-Yates from the back, j = uniform_index(i + 1)
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }
  result_type operator()() noexcept { return next(); }

  std::uint64_t next() noexcept;
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  double normal() noexcept;
  bool coin() noexcept { return (next() >> 63) != 0; }

  template <typename T>
  void shuffle(std::span<T> values) noexcept {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_index(i));
      std::swap(values[i - 1], values[j]);
    }
  }

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace resque
