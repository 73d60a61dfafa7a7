#include "clusterq/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace clusterq {

namespace {

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_probs(double p1, double p2) {
  require(p1 >= 0.0 && p2 >= 0.0 && std::abs(p1 + p2 - 1.0) <= 1e-9,
          "mixture probabilities must be non-negative and sum to 1");
}

/// Moments of a sum of `count`~(given law) iid exponential(phase_mean) phases:
/// mean = E[count]*phase_mean, var = (E[count] + Var[count])*phase_mean^2.
Moments phase_sum_moments(double mean_count, double second_moment_count,
                          double phase_mean) {
  const double var_count = second_moment_count - mean_count * mean_count;
  const double mean = mean_count * phase_mean;
  const double var = (mean_count + var_count) * phase_mean * phase_mean;
  return {mean, std::sqrt(var)};
}

}  // namespace

SizeDistribution::SizeDistribution(Exponential e) : v_(e) {
  require(e.mean > 0.0 && std::isfinite(e.mean), "exponential mean must be positive");
  moments_ = {e.mean, e.mean};
}

SizeDistribution::SizeDistribution(BimodalPhases b) : v_(b) {
  require(b.phase_mean > 0.0 && std::isfinite(b.phase_mean),
          "phase mean must be positive");
  require(b.count1 >= 1 && b.count2 >= 1, "phase counts must be positive");
  check_probs(b.prob1, b.prob2);
  const double ec = b.prob1 * b.count1 + b.prob2 * b.count2;
  const double ec2 = b.prob1 * b.count1 * double(b.count1) +
                     b.prob2 * b.count2 * double(b.count2);
  moments_ = phase_sum_moments(ec, ec2, b.phase_mean);
}

SizeDistribution::SizeDistribution(HyperExponential h) : v_(h) {
  require(h.mean1 > 0.0 && h.mean2 > 0.0, "component means must be positive");
  check_probs(h.prob1, h.prob2);
  const double mean = h.prob1 * h.mean1 + h.prob2 * h.mean2;
  const double second = 2.0 * (h.prob1 * h.mean1 * h.mean1 +
                               h.prob2 * h.mean2 * h.mean2);
  moments_ = {mean, std::sqrt(second - mean * mean)};
}

SizeDistribution::SizeDistribution(ZipfPhases z) : v_(z) {
  require(z.phase_mean > 0.0 && std::isfinite(z.phase_mean),
          "phase mean must be positive");
  require(z.support >= 1 && z.support <= 10000, "zipf support must be in [1, 1e4]");
  require(z.exponent > 0.0, "zipf exponent must be positive");
  zipf_cdf_.resize(z.support);
  double total = 0.0, mean_count = 0.0, second_count = 0.0;
  for (int k = 1; k <= z.support; ++k) {
    const double w = std::pow(double(k), -z.exponent);
    total += w;
    mean_count += w * k;
    second_count += w * double(k) * k;
    zipf_cdf_[k - 1] = total;
  }
  mean_count /= total;
  second_count /= total;
  for (double& c : zipf_cdf_) c /= total;
  moments_ = phase_sum_moments(mean_count, second_count, z.phase_mean);
}

double SizeDistribution::sample(Rng& rng) const {
  struct Visitor {
    Rng& rng;
    const std::vector<double>& zipf_cdf;
    double operator()(const Exponential& e) const {
      return rng.exponential(e.mean);
    }
    double operator()(const BimodalPhases& b) const {
      const int phases = rng.bernoulli(b.prob1) ? b.count1 : b.count2;
      double sum = 0.0;
      for (int k = 0; k < phases; ++k) sum += rng.exponential(b.phase_mean);
      return sum;
    }
    double operator()(const HyperExponential& h) const {
      return rng.exponential(rng.bernoulli(h.prob1) ? h.mean1 : h.mean2);
    }
    double operator()(const ZipfPhases& z) const {
      const double u = rng.uniform01();
      const auto it = std::lower_bound(zipf_cdf.begin(), zipf_cdf.end(), u);
      const int phases =
          1 + static_cast<int>(std::min<std::ptrdiff_t>(
                  it - zipf_cdf.begin(), z.support - 1));
      double sum = 0.0;
      for (int k = 0; k < phases; ++k) sum += rng.exponential(z.phase_mean);
      return sum;
    }
  };
  return std::visit(Visitor{rng, zipf_cdf_}, v_);
}

const char* SizeDistribution::kind() const {
  switch (v_.index()) {
    case 0: return "exponential";
    case 1: return "bimodal";
    case 2: return "hyperexponential";
    default: return "zipf";
  }
}

SizeDistribution SizeDistribution::by_name(const std::string& name) {
  if (name == "exponential") return SizeDistribution(Exponential{});
  if (name == "bimodal") return SizeDistribution(BimodalPhases{});
  if (name == "hyperexponential") return SizeDistribution(HyperExponential{});
  if (name == "zipf") return SizeDistribution(ZipfPhases{});
  throw std::invalid_argument("unknown size distribution: " + name);
}

}  // namespace clusterq
