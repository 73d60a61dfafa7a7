#pragma once

#include <string>
#include <variant>
#include <vector>

#include "clusterq/random.hpp"

namespace clusterq {

struct Moments {
  double mean;
  double stddev;
};

struct Exponential {
  double mean = 1.0;
};

/// Sum of a bimodal number of exponential phases: `count1` phases with
/// probability `prob1`, `count2` with `prob2`, each phase exponential with
/// mean `phase_mean`.
struct BimodalPhases {
  double phase_mean = 0.2;
  int count1 = 25;
  int count2 = 1;
  double prob1 = 1.0 / 6.0;
  double prob2 = 5.0 / 6.0;
};

/// Mixture of two exponentials.
struct HyperExponential {
  double mean1 = 5.0;
  double mean2 = 0.2;
  double prob1 = 1.0 / 6.0;
  double prob2 = 5.0 / 6.0;
};

/// Sum of a Zipf-distributed number of exponential phases: the phase count k
/// is drawn from {1..support} with weight proportional to 1/k^exponent.
struct ZipfPhases {
  double phase_mean = 1.0;
  int support = 200;
  double exponent = 2.0;
};

/// Job-size distribution: sampler plus exact analytic moments.
/// Immutable; one Rng per worker for sampling.
class SizeDistribution {
 public:
  SizeDistribution() : SizeDistribution(Exponential{}) {}
  explicit SizeDistribution(Exponential e);
  explicit SizeDistribution(BimodalPhases b);
  explicit SizeDistribution(HyperExponential h);
  explicit SizeDistribution(ZipfPhases z);

  double sample(Rng& rng) const;
  Moments moments() const { return moments_; }
  double mean() const { return moments_.mean; }

  const char* kind() const;

  /// Distribution by name with the default parameters:
  /// exponential | bimodal | hyperexponential | zipf.
  static SizeDistribution by_name(const std::string& name);

 private:
  std::variant<Exponential, BimodalPhases, HyperExponential, ZipfPhases> v_;
  std::vector<double> zipf_cdf_;  // cumulative phase-count weights
  Moments moments_{1.0, 1.0};
};

}  // namespace clusterq
