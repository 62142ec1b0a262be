#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>

#include "pfl/matrix.hpp"

namespace pfl {

/// splitmix64 step; used to expand a 64-bit seed into generator state.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// xoshiro256** seeded through splitmix64.
///
/// The four state words are the first four outputs of splitmix64 started at
/// `seed`. Integer draws are therefore identical on every platform. Uniform
/// doubles take the top 53 bits of a draw. Normals use the Box–Muller
/// transform on two uniforms, caching the sine branch for the next call; their
/// last bit depends on the platform's libm.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  /// Independent stream derived from (seed, stream) for a named purpose.
  static Rng stream(std::uint64_t seed, std::uint64_t stream) noexcept;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1).
  double uniform() noexcept;
  /// Uniform in (0, 1].
  double uniform_open_zero() noexcept;
  double uniform(double lo, double hi) noexcept;
  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_index(std::size_t n) noexcept;
  /// One N(0,1) draw.
  double normal() noexcept;

 private:
  std::array<std::uint64_t, 4> s_{};
  std::optional<double> cached_normal_;
};

/// n i.i.d. N(0,1) draws. Throws InputError when n == 0.
Vector standard_normal(Rng& rng, std::size_t n);

}  // namespace pfl
