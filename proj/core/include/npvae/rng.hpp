#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>

#include "npvae/matrix.hpp"

namespace npvae {

/// One step of splitmix64: advances `state` and returns the mixed output.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent 64-bit seed for a named stream (and optionally an
/// epoch) from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t epoch = 0);

/// xoshiro256** seeded from a 64-bit seed through splitmix64. Normal draws
/// use Box-Muller and keep the second value of each pair, so a sequence of
/// calls yields the same stream as one call of the combined length.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  /// Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);

  bool operator==(const Rng&) const = default;

 private:
  std::array<std::uint64_t, 4> state_{};
  std::optional<double> spare_normal_;
};

Matrix standard_normal(Rng& rng, std::size_t rows, std::size_t cols);
Matrix uniform_matrix(Rng& rng, std::size_t rows, std::size_t cols, double lo, double hi);

}  // namespace npvae
