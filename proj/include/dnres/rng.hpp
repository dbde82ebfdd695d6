#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace dnres {

/// Seeded random stream: xoshiro256** whose state is expanded from
/// (seed, substream) with splitmix64. The sequence is fully specified by
/// those two integers, independent of platform and standard library.
///
/// Normal variates use the Marsaglia polar method; Poisson variates use
/// sequential inversion for lambda < 10 and Hormann's PTRS transformed
/// rejection above that.
class Rng {
 public:
  static constexpr std::string_view algorithm = "xoshiro256**/splitmix64";

  explicit Rng(std::uint64_t seed = 0, std::uint64_t substream = 0);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t substream_index() const noexcept { return substream_; }

  /// Independent child stream. Deterministic in (seed, path of indices).
  Rng substream(std::uint64_t index) const;

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept;
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
  std::uint64_t poisson(double lambda);

  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t seed_;
  std::uint64_t substream_;
  std::array<std::uint64_t, 4> state_{};
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// Derives a 64-bit seed from a parent seed and a label; used to split one
/// user-facing seed into per-subsystem streams.
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t label) noexcept;

}  // namespace dnres
