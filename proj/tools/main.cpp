#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clusterq/experiments.hpp"

namespace {

using namespace clusterq;
using nlohmann::json;

Scenario resolve_scenario(const std::string& path) {
  for (const auto& name : builtin_scenario_names())
    if (path == "builtin:" + name) return builtin_scenario(name);
  return load_scenario_file(path);
}

json metrics_to_json(const MetricsReport& r) {
  json j;
  j["mean_size"] = r.mean_size;
  j["arrival_rates"] = r.arrival_rates;
  j["mean_jobs"] = r.mean_jobs;
  j["service_rate"] = r.service_rate;
  j["delay"] = r.delay;
  j["normalization"] = r.normalization;
  j["log_normalization"] = r.log_normalization;
  j["truncation_level"] = r.truncation_level;
  j["truncation_error"] = r.truncation_error;
  return j;
}

json run_stats_to_json(const RunStats& rs) {
  json j;
  j["seed"] = rs.seed;
  j["events_applied"] = rs.events_applied;
  j["measured_time"] = rs.measured_time;
  j["total_completions"] = rs.total_completions;
  j["interruptions_per_completion"] = rs.interruptions_per_completion;
  json per_class = json::array();
  for (const auto& cs : rs.per_class) {
    per_class.push_back({{"completions", cs.completions},
                         {"mean_sojourn", cs.mean_sojourn},
                         {"time_avg_jobs", cs.time_avg_jobs},
                         {"completion_rate", cs.completion_rate}});
  }
  j["per_class"] = per_class;
  return j;
}

json replicate_to_json(const ReplicateResult& rep) {
  json j;
  j["runs"] = rep.runs;
  j["mean_size"] = rep.mean_size;
  j["delay_mean"] = rep.delay_mean;
  j["delay_ci95"] = rep.delay_ci_half;
  j["gamma_mean"] = rep.gamma_mean;
  j["gamma_ci95"] = rep.gamma_ci_half;
  j["mean_jobs"] = rep.mean_jobs_mean;
  j["interruptions_per_completion"] = rep.interruptions_per_completion;
  return j;
}

void emit(const json& j, const std::optional<std::string>& out) {
  if (out) {
    std::ofstream os(*out);
    os << j.dump(2) << '\n';
  } else {
    std::cout << j.dump(2) << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-server queue analysis and interruption-based scheduling simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::vector<double> loads;
  std::vector<double> m_values;
  std::optional<int> runs;
  std::optional<std::uint64_t> events, warmup, seed;
  std::optional<double> tolerance;
  std::optional<std::string> dist_name, out_path, trace_path;
  int workers = 0;

  auto add_common = [&](CLI::App* cmd, bool needs_scenario = true) {
    auto* opt = cmd->add_option("--scenario", scenario_path,
                                "Scenario file, or builtin:<symmetric|asymmetric|random4x2>");
    if (needs_scenario) opt->required();
    cmd->add_option("--load", loads, "Load grid (overrides the scenario)");
    cmd->add_option("--m", m_values, "Interruptions-per-job values");
    cmd->add_option("--runs", [&](const auto& v) { runs = std::stoi(v[0]); return true; },
                    "Independent runs per point");
    cmd->add_option("--events", [&](const auto& v) { events = std::stoull(v[0]); return true; },
                    "Measured events per run");
    cmd->add_option("--warmup", [&](const auto& v) { warmup = std::stoull(v[0]); return true; },
                    "Warm-up events per run");
    cmd->add_option("--seed", [&](const auto& v) { seed = std::stoull(v[0]); return true; },
                    "Base seed");
    cmd->add_option("--tolerance", [&](const auto& v) { tolerance = std::stod(v[0]); return true; },
                    "Analytical truncation tolerance");
    cmd->add_option("--dist", [&](const auto& v) { dist_name = v[0]; return true; },
                    "Size distribution: exponential|bimodal|hyperexponential|zipf");
    cmd->add_option("--out", [&](const auto& v) { out_path = v[0]; return true; },
                    "Output file or directory");
    cmd->add_option("--workers", workers, "Max parallel workers (0 = hardware)");
  };

  auto* analyze = app.add_subcommand("analyze", "Balanced-fairness analytical metrics");
  add_common(analyze);
  bool analyze_csv = false;
  analyze->add_flag("--csv", analyze_csv,
                    "Per-class CSV rows instead of JSON (one table per load)");

  auto* simulate_cmd = app.add_subcommand("simulate", "Simulate one configuration");
  add_common(simulate_cmd);
  simulate_cmd->add_option("--trace", [&](const auto& v) { trace_path = v[0]; return true; },
                           "Write a per-event trace (single run only)");

  auto* scenario_cmd = app.add_subcommand("scenario", "Full sweep: analytical + simulated CSVs");
  add_common(scenario_cmd);
  bool gnuplot = false;
  scenario_cmd->add_flag("--gnuplot", gnuplot, "Also write space-separated .dat tables");

  auto* validate = app.add_subcommand("validate", "Run the oracle/property suites");
  add_common(validate, false);

  CLI11_PARSE(app, argc, argv);

  try {
    RunOverrides ov;
    if (!loads.empty()) ov.loads = loads;
    if (!m_values.empty()) ov.m_values = m_values;
    ov.runs = runs;
    ov.events = events;
    ov.warmup = warmup;
    ov.seed = seed;
    ov.tolerance = tolerance;
    ov.dist_name = dist_name;
    ov.max_workers = workers;

    if (app.got_subcommand(analyze)) {
      Scenario s = resolve_scenario(scenario_path);
      if (dist_name) s.size_dist = SizeDistribution::by_name(*dist_name);
      const std::vector<double> grid = !loads.empty() ? loads
                                       : s.lambdas    ? std::vector<double>{-1.0}
                                                      : s.loads;
      json out = json::array();
      std::ostringstream csv;
      for (double load : grid) {
        json row;
        row["load"] = load;
        try {
          const auto report =
              load < 0.0 ? analyze_load_point(s, 0.0, tolerance.value_or(s.tolerance))
                         : analyze_load_point(s, load, tolerance.value_or(s.tolerance));
          row["metrics"] = metrics_to_json(report);
          if (analyze_csv) {
            csv << "# load " << load << '\n';
            write_metrics_csv(report, csv);
          }
        } catch (const std::exception& e) {
          row["error"] = e.what();
          if (analyze_csv) csv << "# load " << load << ": " << e.what() << '\n';
        }
        out.push_back(std::move(row));
      }
      if (analyze_csv) {
        if (out_path) {
          std::ofstream os(*out_path);
          os << csv.str();
        } else {
          std::cout << csv.str();
        }
      } else {
        emit(out, out_path);
      }
      return 0;
    }

    if (app.got_subcommand(simulate_cmd)) {
      Scenario s = resolve_scenario(scenario_path);
      if (dist_name) s.size_dist = SizeDistribution::by_name(*dist_name);
      if (events) s.events = *events;
      if (warmup) s.warmup = *warmup;
      if (seed) s.seed = *seed;
      const double load = !loads.empty() ? loads[0] : (s.loads.empty() ? 0.5 : s.loads[0]);
      const double m = !m_values.empty() ? m_values[0]
                       : s.m_values.empty() ? 0.0 : s.m_values[0];
      SimConfig cfg = make_sim_config(s, load, m);
      std::ofstream trace_file;
      if (trace_path) {
        trace_file.open(*trace_path);
        cfg.trace = &trace_file;
      }
      if (runs.value_or(1) > 1 && !trace_path) {
        emit(replicate_to_json(replicate(cfg, *runs, workers)), out_path);
      } else {
        emit(run_stats_to_json(clusterq::simulate(cfg)), out_path);
      }
      return 0;
    }

    if (app.got_subcommand(scenario_cmd)) {
      Scenario s = resolve_scenario(scenario_path);
      const auto result = run_scenario(s, ov);
      const std::string dir = out_path.value_or("out/" + result.name);
      write_scenario_csv(result, dir);
      if (gnuplot) write_scenario_gnuplot(result, dir);
      std::cout << "wrote " << dir << "/gamma.csv and " << dir << "/delta.csv\n";
      return 0;
    }

    if (app.got_subcommand(validate)) {
      std::vector<std::pair<std::string, Scenario>> targets;
      if (!scenario_path.empty()) {
        targets.emplace_back(scenario_path, resolve_scenario(scenario_path));
      } else {
        targets.emplace_back("builtin:symmetric", builtin_scenario("symmetric"));
        targets.emplace_back("builtin:asymmetric", builtin_scenario("asymmetric"));
        targets.emplace_back("builtin:random4x2", builtin_scenario("random4x2"));
      }
      bool all_ok = true;
      for (auto& [name, s] : targets) {
        std::shared_ptr<const ClusterModel> model = s.model;
        std::vector<double> rates;
        const double load = !loads.empty()       ? loads[0]
                            : s.loads.empty()    ? 0.8
                                                 : s.loads.back();
        if (s.random_assignment) {
          // Validate on the enumerated model when it is small enough.
          const int S = s.random_assignment->num_servers;
          const int d = s.random_assignment->servers_per_job;
          std::vector<std::vector<int>> classes;
          std::vector<int> pick(d);
          for (int i = 0; i < d; ++i) pick[i] = i;
          while (classes.size() <= 20) {
            classes.push_back(pick);
            int j = d - 1;
            while (j >= 0 && pick[j] == S - d + j) --j;
            if (j < 0) break;
            ++pick[j];
            for (int l = j + 1; l < d; ++l) pick[l] = pick[l - 1] + 1;
          }
          if (classes.size() > 20) {
            std::cout << name << ": skipped (classes not enumerable)\n";
            continue;
          }
          model = std::make_shared<ClusterModel>(std::vector<double>(S, 1.0), classes);
          const double total = load * model->total_capacity() / s.size_dist.mean();
          rates.assign(model->num_classes(), total / double(model->num_classes()));
        } else {
          rates = s.rates_for_load(load);
        }
        std::cout << "== " << name << " (load " << load << ") ==\n";
        const auto checks =
            run_validation_suite(*model, {rates, s.size_dist.mean()});
        for (const auto& c : checks) {
          std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name;
          if (!c.detail.empty()) std::cout << " — " << c.detail;
          std::cout << '\n';
          all_ok = all_ok && c.passed;
        }
      }
      return all_ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
