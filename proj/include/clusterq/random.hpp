#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace clusterq {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Seedable random stream. Each worker owns its own instance; `split` derives
/// an independent stream deterministically from the original seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), gen_(splitmix64(seed)) {}

  std::uint64_t seed() const { return seed_; }

  Rng split(std::uint64_t stream) const {
    return Rng(splitmix64(seed_ ^ (0xa0761d6478bd642full + stream)));
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform draw in (0, 1].
  double uniform01() {
    return (static_cast<double>(gen_() >> 11) + 1.0) * 0x1p-53;
  }

  double exponential(double mean) { return -mean * std::log(uniform01()); }

  /// Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    return static_cast<int>(gen_() % static_cast<std::uint64_t>(n));
  }

  bool bernoulli(double p) { return uniform01() <= p; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
};

}  // namespace clusterq
