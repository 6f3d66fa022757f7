#include "difftrack/rng.hpp"

namespace difftrack {

namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32)};
  return std::mt19937_64(seq);
}

// splitmix64 finalizer; decorrelates (seed, index) pairs.
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(seeded_engine(seed)) {}

Rng Rng::substream(std::uint64_t index) const {
  return Rng(mix(seed_ ^ mix(index + 0x632be59bd9b4e019ULL)));
}

double Rng::normal() { return normal_(engine_); }

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

}  // namespace difftrack
