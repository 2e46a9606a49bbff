#pragma once

#include <array>
#include <cstdint>
#include <optional>

namespace wmlff {

// xoshiro256** seeded through splitmix64. Normal draws use the basic
// Box-Muller transform on two uniforms in (0, 1], caching the sine branch,
// so a given seed yields the same stream on every platform with IEEE doubles
// and a correctly rounded libm.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  // Uniform in (0, 1] with 53 bits of resolution.
  double uniform();
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);
  double standard_normal();

 private:
  std::array<std::uint64_t, 4> state_{};
  std::optional<double> cached_normal_;
};

// One draw from N(mu, sigma^2).
double gaussian(Rng& rng, double mu, double sigma);

// Mixes a base seed with a stream index so that derived streams do not overlap.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace wmlff
