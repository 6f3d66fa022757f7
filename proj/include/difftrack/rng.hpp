#pragma once

#include <cstdint>
#include <random>

namespace difftrack {

/// Seedable generator. Every stochastic routine takes one explicitly so that
/// a run is reproducible from its seed; there is no global random state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent child stream identified by `index`. Deriving the same index
  /// twice from the same seed yields identical streams.
  Rng substream(std::uint64_t index) const;

  std::uint64_t seed() const noexcept { return seed_; }

  double normal();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  /// Uniform integer in the closed range [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  bool bernoulli(double p);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace difftrack
