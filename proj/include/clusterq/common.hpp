#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

namespace clusterq {

/// Detailed queue state: job classes in queue order, head of the queue first.
using ClassSeq = std::vector<int>;

/// Aggregate state: number of jobs of each class, one entry per class.
using Counts = std::vector<int>;

/// Subset of job classes, bit i <-> class i. Valid for models with <= 64 classes.
using ClassMask = std::uint64_t;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// log(exp(a) + exp(b)) computed without leaving the log domain.
inline double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

inline long total_jobs(std::span<const int> x) {
  long n = 0;
  for (int v : x) n += v;
  return n;
}

struct CountsHash {
  std::size_t operator()(const Counts& v) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (int e : v) {
      h ^= static_cast<std::uint64_t>(e) + 0x9e3779b97f4a7c15ull;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

}  // namespace clusterq
