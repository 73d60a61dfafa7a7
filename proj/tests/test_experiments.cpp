#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "clusterq/experiments.hpp"
#include "test_util.hpp"

using namespace clusterq;
using testutil::close;

namespace {

const char* kScenarioJson = R"json({
  "name": "toy",
  "model": { "capacities": [1, 1, 1], "classes": [[1, 3], [2, 3]] },
  "size_distribution": { "type": "hyperexponential" },
  "loads": [0.2, 0.5],
  "m": [0, 1],
  "runs": 2,
  "events": 2000,
  "warmup": 500,
  "seed": 9,
  "tolerance": 1e-9
})json";

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("scenario parsing") {
  const Scenario s = scenario_from_json_text(kScenarioJson);
  CHECK(s.name == "toy");
  REQUIRE(s.model);
  CHECK(s.model->num_servers() == 3);
  CHECK(s.model->num_classes() == 2);
  CHECK(s.model->servers_of(0) == std::vector<int>{0, 2});  // 1-based in file
  CHECK(std::string(s.size_dist.kind()) == "hyperexponential");
  CHECK(s.loads == std::vector<double>{0.2, 0.5});
  CHECK(s.m_values == std::vector<double>{0.0, 1.0});
  CHECK(s.runs == 2);
  CHECK(s.events == 2000);
  CHECK(s.seed == 9);

  CHECK_THROWS_AS(scenario_from_json_text(R"({"name":"x","loads":[0.5]})"),
                  std::invalid_argument);
  CHECK_THROWS_AS(scenario_from_json_text(
                      R"({"random_assignment":{"servers":4,"per_job":9},"loads":[0.5]})"),
                  std::invalid_argument);
}

TEST_CASE("scenario files shipped with the repo parse") {
  namespace fs = std::filesystem;
  const fs::path dir{CLUSTERQ_SCENARIO_DIR};
  REQUIRE(fs::exists(dir));
  int seen = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(scenario_from_json_text(read_file(entry.path().string())));
    ++seen;
  }
  CHECK(seen >= 4);
}

TEST_CASE("load-to-rate mapping") {
  const Scenario s = builtin_scenario("symmetric");
  const auto rates = s.rates_for_load(0.95);
  CHECK(rates[0] == doctest::Approx(1.425).epsilon(1e-12));
  CHECK(rates[1] == doctest::Approx(1.425).epsilon(1e-12));
  // the boundary load saturates the full server set
  const auto st =
      check_stability(*s.model, {s.rates_for_load(1.0), s.size_dist.mean()});
  CHECK_FALSE(st.stable);
  CHECK(check_stability(*s.model, {rates, 1.0}).stable);

  // size rescaling: heavier jobs mean fewer arrivals at equal load
  Scenario zipf = s;
  zipf.size_dist = SizeDistribution(ZipfPhases{});
  const auto zr = zipf.rates_for_load(0.95);
  CHECK(zr[0] == doctest::Approx(1.425 / zipf.size_dist.mean()).epsilon(1e-9));

  Scenario weighted = s;
  weighted.weights = {3.0, 1.0};
  const auto wr = weighted.rates_for_load(0.5);
  CHECK(wr[0] == doctest::Approx(3.0 * wr[1]).epsilon(1e-12));
}

TEST_CASE("random-assignment scenarios") {
  const auto s = random_assignment_scenario(4, 2, 1.2, SizeDistribution(), {1.0});
  REQUIRE(s.random_assignment);
  CHECK(s.num_stat_classes() == 1);

  SUBCASE("analysis expands to C(S,d) classes when small") {
    const auto report = analyze_load_point(s, 0.0, 1e-8);
    CHECK(report.arrival_rates.size() == 6);  // C(4,2)
    for (int i = 0; i < 6; ++i)
      CHECK(report.arrival_rates[i] == doctest::Approx(0.2).epsilon(1e-12));
    // symmetry: every class sees the same service rate
    for (int i = 1; i < 6; ++i)
      CHECK(close(report.service_rate[i], report.service_rate[0], 1e-9));
  }

  SUBCASE("analysis refuses non-enumerable class sets") {
    const auto big =
        random_assignment_scenario(100, 2, 10.0, SizeDistribution(), {1.0});
    CHECK_THROWS_AS(analyze_load_point(big, 0.0, 1e-8), std::invalid_argument);
    // ... but simulation configs still work at that scale
    const SimConfig cfg = make_sim_config(big, 0.0, 1.0);
    CHECK(cfg.random_assignment->total_rate == doctest::Approx(10.0));
    CHECK(cfg.model->num_servers() == 100);
  }

  SUBCASE("d = S pools everything") {
    const auto pooled =
        random_assignment_scenario(3, 3, 0.3, SizeDistribution(), {1.0});
    const auto report = analyze_load_point(pooled, 0.0, 1e-8);
    CHECK(report.arrival_rates.size() == 1);
    CHECK(close(report.service_rate[0] * 0.0 + report.service_rate[0],
                report.service_rate[0], 1e-12));
    // light traffic: gamma tends to the full capacity 3
    const auto light =
        random_assignment_scenario(3, 3, 1e-6, SizeDistribution(), {1.0});
    const auto lr = analyze_load_point(light, 0.0, 1e-8);
    CHECK(close(lr.service_rate[0], 3.0, 1e-4));
  }
}

TEST_CASE("scenario sweep writes the CSV tables") {
  Scenario s = scenario_from_json_text(kScenarioJson);
  s.size_dist = SizeDistribution(Exponential{1.0});
  s.loads = {0.0, 0.3, 1.2};  // empty, stable, unstable
  RunOverrides ov;
  ov.runs = 2;
  ov.events = std::uint64_t{3000};
  ov.warmup = std::uint64_t{500};
  ov.max_workers = 2;

  const auto result = run_scenario(s, ov);
  REQUIRE(result.points.size() == 3);

  const auto& empty = result.points[0];
  CHECK(empty.stable);
  CHECK(empty.has_analytical);
  CHECK(empty.analytical_gamma[0] == doctest::Approx(2.0));  // peak rate
  CHECK_FALSE(empty.simulated);

  const auto& mid = result.points[1];
  CHECK(mid.stable);
  CHECK(mid.simulated);
  REQUIRE(mid.sim_delta.size() == 2);  // one per m
  for (const auto& per_class : mid.sim_delta)
    for (double v : per_class) CHECK(v > 0.0);
  // analytical column agrees with the closed form
  const auto tree = tree_closed_form(1, 1, 1, 0.45, 0.45);
  CHECK(close(mid.analytical_gamma[0], tree.gamma1, 1e-6));

  const auto& unstable = result.points[2];
  CHECK_FALSE(unstable.stable);
  CHECK_FALSE(unstable.simulated);

  const std::string dir = "test_sweep_out";
  write_scenario_csv(result, dir);
  write_scenario_gnuplot(result, dir);
  const std::string gamma_csv = read_file(dir + "/gamma.csv");
  CHECK(gamma_csv.find("load,class,analytical,m0_mean,m0_ci95,m1_mean,m1_ci95,"
                       "stable,stability_check") == 0);
  CHECK(gamma_csv.find("divergent") != std::string::npos);
  CHECK(read_file(dir + "/delta.csv").find("load,class") == 0);
  CHECK(read_file(dir + "/gamma.dat").find("# load class") == 0);
  std::filesystem::remove_all(dir);
}

TEST_CASE("non-enumerable random assignment sweeps simulation-only") {
  Scenario s = builtin_scenario("random4x2");
  s.random_assignment = RandomAssignmentScenario{100, 2};
  s.loads = {0.5};
  s.m_values = {1.0};
  s.runs = 2;
  s.events = 3000;
  s.warmup = 500;
  const auto result = run_scenario(s, {});
  REQUIRE(result.points.size() == 1);
  const auto& p = result.points[0];
  CHECK(p.stable);
  CHECK_FALSE(p.stability_exact);   // judged from the load bound only
  CHECK_FALSE(p.has_analytical);
  CHECK(p.simulated);
  CHECK(p.sim_delta[0][0] > 0.0);

  const std::string dir = "test_ra_out";
  write_scenario_csv(result, dir);
  const std::string csv = read_file(dir + "/delta.csv");
  CHECK(csv.find("load_bound") != std::string::npos);
  std::filesystem::remove_all(dir);
}

TEST_CASE("explicit lambdas instead of a load grid") {
  Scenario s = builtin_scenario("symmetric");
  s.lambdas = std::vector<double>{1.0, 1.0};
  s.runs = 0;  // analytical only
  const auto result = run_scenario(s, {});
  REQUIRE(result.points.size() == 1);
  CHECK(result.points[0].load == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(close(result.points[0].analytical_gamma[0], 1.0 / 1.4, 1e-6));
}

TEST_CASE("exponential sweep: analytical value inside the 95% CI at most points") {
  Scenario s = builtin_scenario("symmetric");
  s.size_dist = SizeDistribution(Exponential{1.0});
  s.m_values = {1.0};
  s.runs = 12;
  s.events = 60000;
  s.warmup = 40000;
  s.seed = 2;
  const auto result = run_scenario(s, {});
  int hits = 0, points = 0;
  for (const auto& p : result.points) {
    for (int c = 0; c < result.num_classes; ++c) {
      ++points;
      if (std::abs(p.sim_delta[0][c] - p.analytical_delta[c]) <=
          p.sim_delta_ci[0][c])
        ++hits;
    }
  }
  REQUIRE(points == 18);
  CHECK(hits * 10 >= points * 9);
}

TEST_CASE("builtin scenarios") {
  for (const auto& name : builtin_scenario_names())
    CHECK_NOTHROW(builtin_scenario(name));
  CHECK_THROWS_AS(builtin_scenario("nope"), std::invalid_argument);
}

TEST_CASE("validation suite passes on the builtin models") {
  const auto sym = builtin_scenario("symmetric");
  const auto checks =
      run_validation_suite(*sym.model, {sym.rates_for_load(0.8), 1.0});
  CHECK(checks.size() >= 8);
  for (const auto& c : checks) {
    CAPTURE(c.name);
    CAPTURE(c.detail);
    CHECK(c.passed);
  }

  const auto asym = builtin_scenario("asymmetric");
  for (const auto& c :
       run_validation_suite(*asym.model, {asym.rates_for_load(0.7), 1.0})) {
    CAPTURE(c.name);
    CHECK(c.passed);
  }
}

TEST_CASE("validation suite detects instability divergence") {
  const auto sym = builtin_scenario("symmetric");
  const auto checks =
      run_validation_suite(*sym.model, {{1.6, 1.6}, 1.0});
  bool saw_divergence = false;
  for (const auto& c : checks) {
    if (c.name == "instability-divergence") {
      saw_divergence = true;
      CHECK(c.passed);
    }
  }
  CHECK(saw_divergence);
}
