#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "clusterq/distributions.hpp"
#include "clusterq/random.hpp"

using namespace clusterq;

namespace {

struct Sample {
  double mean;
  double stddev;
  double min;
  double mean_se;    // standard error of the sample mean
  double stddev_se;  // moment-based standard error of the sample stddev
};

Sample draw(const SizeDistribution& dist, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> xs(n);
  double sum = 0.0;
  for (double& x : xs) {
    x = dist.sample(rng);
    sum += x;
  }
  const double mean = sum / double(n);
  double m2 = 0.0, m4 = 0.0, min = xs[0];
  for (double x : xs) {
    const double d = x - mean;
    m2 += d * d;
    m4 += d * d * d * d;
    min = std::min(min, x);
  }
  m2 /= double(n);
  m4 /= double(n);
  const double sd = std::sqrt(m2);
  // var(s^2) ~ (m4 - m2^2)/n; delta method for s = sqrt(s^2)
  const double sd_se = std::sqrt(std::max(m4 - m2 * m2, 0.0) / double(n)) / (2 * sd);
  return {mean, sd, min, sd / std::sqrt(double(n)), sd_se};
}

}  // namespace

TEST_CASE("exact moments") {
  SUBCASE("exponential") {
    const auto mo = SizeDistribution(Exponential{1.0}).moments();
    CHECK(mo.mean == 1.0);
    CHECK(mo.stddev == 1.0);
  }
  SUBCASE("bimodal phase count") {
    const auto mo = SizeDistribution(BimodalPhases{}).moments();
    CHECK(mo.mean == doctest::Approx(1.0).epsilon(1e-12));
    // E[C] = 5, Var[C] = 80, phase mean 1/5: var = (5 + 80)/25 = 3.4
    CHECK(mo.stddev == doctest::Approx(std::sqrt(3.4)).epsilon(1e-12));
    CHECK(mo.stddev == doctest::Approx(1.84).epsilon(5e-3));
  }
  SUBCASE("hyperexponential") {
    const auto mo = SizeDistribution(HyperExponential{}).moments();
    CHECK(mo.mean == doctest::Approx(1.0).epsilon(1e-12));
    // second moment 2(p1 s1^2 + p2 s2^2) = 8.4, so variance 7.4
    CHECK(mo.stddev == doctest::Approx(std::sqrt(7.4)).epsilon(1e-12));
  }
  SUBCASE("zipf phase count") {
    const auto mo = SizeDistribution(ZipfPhases{}).moments();
    CHECK(mo.mean == doctest::Approx(3.58).epsilon(2e-3));
    CHECK(mo.stddev == doctest::Approx(10.61).epsilon(2e-3));
  }
}

TEST_CASE("empirical moments match the analytic ones within 3 standard errors") {
  const std::size_t n = 1000000;
  int variant = 0;
  for (const char* name : {"exponential", "bimodal", "hyperexponential", "zipf"}) {
    CAPTURE(name);
    const auto dist = SizeDistribution::by_name(name);
    const auto mo = dist.moments();
    const auto s = draw(dist, n, 1000 + variant++);
    CHECK(std::abs(s.mean - mo.mean) <= 3.0 * s.mean_se);
    CHECK(std::abs(s.stddev - mo.stddev) <= 3.0 * s.stddev_se);
    CHECK(s.min > 0.0);
  }
}

TEST_CASE("reference values for the standard parameters") {
  const std::size_t n = 1000000;
  SUBCASE("bimodal mean 1.00 +- 0.01") {
    const auto s = draw(SizeDistribution(BimodalPhases{}), n, 17);
    CHECK(std::abs(s.mean - 1.0) <= 0.01);
  }
  SUBCASE("zipf mean 3.58 +- 0.05") {
    const auto s = draw(SizeDistribution(ZipfPhases{}), n, 18);
    CHECK(std::abs(s.mean - 3.58) <= 0.05);
  }
  SUBCASE("exponential mean 1 +- 0.01") {
    const auto s = draw(SizeDistribution(Exponential{1.0}), n, 19);
    CHECK(std::abs(s.mean - 1.0) <= 0.01);
  }
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(SizeDistribution(Exponential{-1.0}), std::invalid_argument);
  CHECK_THROWS_AS(SizeDistribution(BimodalPhases{0.2, 0, 1, 0.5, 0.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(SizeDistribution(BimodalPhases{0.2, 25, 1, 0.5, 0.4}),
                  std::invalid_argument);
  CHECK_THROWS_AS(SizeDistribution(HyperExponential{5.0, -0.2, 0.5, 0.5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(SizeDistribution(ZipfPhases{1.0, 0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(SizeDistribution(ZipfPhases{1.0, 200, -2.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(SizeDistribution::by_name("pareto"), std::invalid_argument);
}

TEST_CASE("sampling is deterministic per seed and splittable") {
  const auto dist = SizeDistribution(ZipfPhases{});
  Rng a(42), b(42);
  for (int k = 0; k < 1000; ++k) CHECK(dist.sample(a) == dist.sample(b));

  Rng base(7);
  Rng s1 = base.split(1), s2 = base.split(2), s1_again = base.split(1);
  CHECK(s1.next_u64() == s1_again.next_u64());
  CHECK(s1.next_u64() != s2.next_u64());
}

TEST_CASE("zipf support boundary") {
  // support = 1 degenerates to a single exponential phase
  const auto dist = SizeDistribution(ZipfPhases{2.0, 1, 3.0});
  const auto mo = dist.moments();
  CHECK(mo.mean == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(mo.stddev == doctest::Approx(2.0).epsilon(1e-12));
}
