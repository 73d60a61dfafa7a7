#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "clusterq/analysis.hpp"
#include "clusterq/distributions.hpp"
#include "clusterq/model.hpp"
#include "clusterq/simulator.hpp"

namespace clusterq {

/// Random server assignment: each arriving job draws `servers_per_job`
/// distinct servers uniformly at random (N = C(S, d) implicit classes).
struct RandomAssignmentScenario {
  int num_servers = 4;
  int servers_per_job = 2;
};

struct Scenario {
  std::string name = "scenario";

  // Exactly one of the two cluster descriptions.
  std::shared_ptr<const ClusterModel> model;
  std::optional<RandomAssignmentScenario> random_assignment;

  SizeDistribution size_dist;

  /// Load grid; each load rho maps to a total arrival rate
  /// rho * total_capacity / mean_size, split across classes by `weights`.
  std::vector<double> loads;
  /// Explicit per-class arrival rates; used instead of `loads` when set.
  std::optional<std::vector<double>> lambdas;
  std::vector<double> weights;  // per-class split, normalized; default equal

  std::vector<double> m_values{0.0, 1.0, 5.0};

  int runs = 100;
  std::uint64_t events = 1000000;
  std::uint64_t warmup = 1000000;
  std::uint64_t seed = 1;
  double tolerance = 1e-10;  // analytical truncation tolerance

  bool simulate_unstable = false;

  /// Per-class arrival rates for one load point (model scenarios), or the
  /// single total rate (random-assignment scenarios).
  std::vector<double> rates_for_load(double load) const;
  int num_stat_classes() const;
};

/// Parses the scenario JSON schema (see README). Server indices in files are
/// 1-based; distribution parameters default to the standard ones by type.
Scenario scenario_from_json_text(const std::string& text);
Scenario load_scenario_file(const std::string& path);

/// Built-in scenarios: "symmetric" (three unit servers, one shared),
/// "asymmetric" (class 2 restricted to the shared server), "random4x2".
Scenario builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();

Scenario random_assignment_scenario(int num_servers, int servers_per_job,
                                    double total_rate, SizeDistribution dist,
                                    std::vector<double> m_values);

// ---------------------------------------------------------------------------
// Sweep results.

struct LoadPointResult {
  double load = kNaN;
  std::vector<double> arrival_rates;
  bool stable = false;
  bool stability_exact = true;  // false when judged from the load bound only
  bool has_analytical = false;
  std::vector<double> analytical_gamma;  // per stat class
  std::vector<double> analytical_delta;
  // Indexed [m][stat class].
  std::vector<std::vector<double>> sim_gamma, sim_gamma_ci;
  std::vector<std::vector<double>> sim_delta, sim_delta_ci;
  bool simulated = false;
};

struct ScenarioResult {
  std::string name;
  std::vector<double> m_values;
  int num_classes = 0;
  std::vector<LoadPointResult> points;
};

struct RunOverrides {
  std::optional<std::vector<double>> loads;
  std::optional<std::vector<double>> m_values;
  std::optional<int> runs;
  std::optional<std::uint64_t> events;
  std::optional<std::uint64_t> warmup;
  std::optional<std::uint64_t> seed;
  std::optional<double> tolerance;
  std::optional<std::string> dist_name;
  bool analytical_only = false;
  int max_workers = 0;
};

/// Runs the sweep: per load point, the balanced-fairness analytical metrics
/// (where tractable) and one replication set per m value.
ScenarioResult run_scenario(const Scenario& scenario, const RunOverrides& = {});

/// SimConfig for a single (load, m) point of a scenario.
SimConfig make_sim_config(const Scenario& scenario, double load, double m);

/// Analytical metrics for one load point; throws when unstable.
MetricsReport analyze_load_point(const Scenario& scenario, double load,
                                 double tolerance);

/// Writes gamma.csv and delta.csv under `out_dir`:
/// load,class,analytical,m<v>_mean,m<v>_ci95,...,stable
/// Unstable points carry "divergent" in the analytical column.
void write_scenario_csv(const ScenarioResult& result, const std::string& out_dir);

/// Space-separated variant of the same tables for gnuplot.
void write_scenario_gnuplot(const ScenarioResult& result,
                            const std::string& out_dir);

// ---------------------------------------------------------------------------
// Validation suite (the `validate` CLI subcommand).

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Property checks for one model + workload: OI axioms, submodularity,
/// positional rate decomposition, stability witness + comparison bound,
/// balance/Pareto/capacity-set membership, the average-rate equivalence,
/// product form against the truncated Markov chain, and metric identities.
std::vector<CheckResult> run_validation_suite(const ClusterModel& model,
                                              const WorkloadSpec& workload);

}  // namespace clusterq
