#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "clusterq/analysis.hpp"
#include "clusterq/ctmc.hpp"
#include "clusterq/distributions.hpp"
#include "clusterq/experiments.hpp"
#include "clusterq/model.hpp"
#include "clusterq/random.hpp"
#include "clusterq/simulator.hpp"

namespace py = pybind11;
using namespace clusterq;

namespace {

WorkloadSpec make_workload(std::vector<double> lambdas, double mean_size) {
  return WorkloadSpec{std::move(lambdas), mean_size};
}

}  // namespace

PYBIND11_MODULE(clusterq, m) {
  m.doc() = "Multi-server queues with a class/server compatibility graph: "
            "balanced-fairness analysis and the interruption-based scheduler";

  py::class_<ClusterModel, std::shared_ptr<ClusterModel>>(m, "ClusterModel")
      .def(py::init<std::vector<double>, std::vector<std::vector<int>>>(),
           py::arg("server_capacities"), py::arg("class_servers"))
      .def_property_readonly("num_servers", &ClusterModel::num_servers)
      .def_property_readonly("num_classes", &ClusterModel::num_classes)
      .def_property_readonly("total_capacity", &ClusterModel::total_capacity)
      .def("server_capacity", &ClusterModel::server_capacity)
      .def("servers_of", &ClusterModel::servers_of)
      .def("class_peak_rate", &ClusterModel::class_peak_rate)
      .def("rate_of_set",
           [](const ClusterModel& mod, const std::vector<int>& classes) {
             return mod.rate_of_set(std::span<const int>(classes));
           },
           py::arg("classes"));

  m.def("per_position_rates",
        [](const ClusterModel& mod, const std::vector<int>& state) {
          return per_position_rates(mod, state);
        },
        py::arg("model"), py::arg("state"));

  py::class_<BalanceTable>(m, "BalanceTable")
      .def(py::init<const ClusterModel&>(), py::keep_alive<1, 2>())
      .def("log_phi",
           [](BalanceTable& t, const std::vector<int>& x) { return t.log_phi(x); })
      .def("phi",
           [](BalanceTable& t, const std::vector<int>& x) {
             return std::exp(t.log_phi(x));
           })
      .def_property_readonly("memo_size", &BalanceTable::memo_size);

  m.def("bf_rates",
        [](BalanceTable& t, const std::vector<int>& x) { return bf_rates(t, x); },
        py::arg("table"), py::arg("x"));

  m.def("avg_rates_oracle",
        [](const ClusterModel& mod, const std::vector<double>& lambdas,
           const std::vector<int>& x, std::uint64_t cap) {
          return avg_rates_oracle(mod, lambdas, x, cap);
        },
        py::arg("model"), py::arg("arrival_rates"), py::arg("x"),
        py::arg("max_orderings") = 100000);

  m.def("detailed_log_weight",
        [](const ClusterModel& mod, const std::vector<double>& lambdas,
           const std::vector<int>& seq, double sigma) {
          return detailed_log_weight(mod, make_workload(lambdas, sigma), seq);
        },
        py::arg("model"), py::arg("arrival_rates"), py::arg("seq"),
        py::arg("mean_size") = 1.0);

  m.def("aggregate_log_weight",
        [](const ClusterModel& mod, BalanceTable& t,
           const std::vector<double>& lambdas, const std::vector<int>& x,
           double sigma) {
          return aggregate_log_weight(mod, make_workload(lambdas, sigma), t, x);
        },
        py::arg("model"), py::arg("table"), py::arg("arrival_rates"),
        py::arg("x"), py::arg("mean_size") = 1.0);

  py::class_<StabilityReport>(m, "StabilityReport")
      .def_readonly("stable", &StabilityReport::stable)
      .def_readonly("violating_set", &StabilityReport::violating_set)
      .def_readonly("eta", &StabilityReport::eta)
      .def_readonly("worst_slack", &StabilityReport::worst_slack);

  m.def("check_stability",
        [](const ClusterModel& mod, const std::vector<double>& lambdas,
           double sigma) {
          return check_stability(mod, make_workload(lambdas, sigma));
        },
        py::arg("model"), py::arg("arrival_rates"), py::arg("mean_size") = 1.0);

  py::class_<BoundCheckReport>(m, "BoundCheckReport")
      .def_readonly("holds", &BoundCheckReport::holds)
      .def_readonly("worst_log_ratio", &BoundCheckReport::worst_log_ratio)
      .def_readonly("worst_state", &BoundCheckReport::worst_state)
      .def_readonly("states_checked", &BoundCheckReport::states_checked);

  m.def("comparison_bound_check",
        [](const ClusterModel& mod, const std::vector<double>& lambdas,
           const std::vector<double>& eta, int x_max, double sigma) {
          return comparison_bound_check(mod, make_workload(lambdas, sigma), eta,
                                        x_max);
        },
        py::arg("model"), py::arg("arrival_rates"), py::arg("eta"),
        py::arg("x_max"), py::arg("mean_size") = 1.0);

  py::class_<MetricsReport>(m, "MetricsReport")
      .def_readonly("arrival_rates", &MetricsReport::arrival_rates)
      .def_readonly("mean_size", &MetricsReport::mean_size)
      .def_readonly("mean_jobs", &MetricsReport::mean_jobs)
      .def_readonly("service_rate", &MetricsReport::service_rate)
      .def_readonly("delay", &MetricsReport::delay)
      .def_readonly("normalization", &MetricsReport::normalization)
      .def_readonly("log_normalization", &MetricsReport::log_normalization)
      .def_readonly("truncation_level", &MetricsReport::truncation_level)
      .def_readonly("truncation_error", &MetricsReport::truncation_error)
      .def("csv", [](const MetricsReport& r) {
        std::ostringstream os;
        write_metrics_csv(r, os);
        return os.str();
      });

  m.def("performance_metrics",
        [](const ClusterModel& mod, const std::vector<double>& lambdas,
           double sigma, double tolerance, std::size_t max_states) {
          MetricsOptions opts;
          opts.tolerance = tolerance;
          opts.max_states = max_states;
          return performance_metrics(mod, make_workload(lambdas, sigma), opts);
        },
        py::arg("model"), py::arg("arrival_rates"), py::arg("mean_size") = 1.0,
        py::arg("tolerance") = 1e-10, py::arg("max_states") = 40000000);

  m.def("normalization_partial_sums",
        [](const ClusterModel& mod, const std::vector<double>& lambdas,
           double sigma, int max_level) {
          return normalization_partial_sums(mod, make_workload(lambdas, sigma),
                                            max_level);
        },
        py::arg("model"), py::arg("arrival_rates"), py::arg("mean_size") = 1.0,
        py::arg("max_level") = 30);

  m.def("tree_closed_form",
        [](double mu1, double mu2, double mu3, double l1, double l2) {
          const auto r = tree_closed_form(mu1, mu2, mu3, l1, l2);
          return py::make_tuple(r.gamma1, r.gamma2);
        },
        py::arg("mu1"), py::arg("mu2"), py::arg("mu3"), py::arg("lambda1"),
        py::arg("lambda2"));

  py::class_<CtmcSolution>(m, "CtmcSolution")
      .def_readonly("states", &CtmcSolution::states)
      .def_readonly("probabilities", &CtmcSolution::probabilities)
      .def_readonly("iterations", &CtmcSolution::iterations)
      .def_readonly("residual", &CtmcSolution::residual)
      .def("index_of", &CtmcSolution::index_of);

  m.def("ctmc_oracle",
        [](const ClusterModel& mod, const std::vector<double>& lambdas,
           int max_jobs, double sigma, std::size_t max_states) {
          return ctmc_oracle(mod, make_workload(lambdas, sigma), max_jobs,
                             max_states);
        },
        py::arg("model"), py::arg("arrival_rates"), py::arg("max_jobs"),
        py::arg("mean_size") = 1.0, py::arg("max_states") = 20000);

  // Size distributions.
  py::class_<SizeDistribution>(m, "SizeDistribution")
      .def_static("exponential",
                  [](double mean) { return SizeDistribution(Exponential{mean}); },
                  py::arg("mean") = 1.0)
      .def_static("bimodal",
                  [](double phase_mean, int count1, int count2, double prob1,
                     double prob2) {
                    return SizeDistribution(
                        BimodalPhases{phase_mean, count1, count2, prob1, prob2});
                  },
                  py::arg("phase_mean") = 0.2, py::arg("count1") = 25,
                  py::arg("count2") = 1, py::arg("prob1") = 1.0 / 6,
                  py::arg("prob2") = 5.0 / 6)
      .def_static("hyperexponential",
                  [](double mean1, double mean2, double prob1, double prob2) {
                    return SizeDistribution(
                        HyperExponential{mean1, mean2, prob1, prob2});
                  },
                  py::arg("mean1") = 5.0, py::arg("mean2") = 0.2,
                  py::arg("prob1") = 1.0 / 6, py::arg("prob2") = 5.0 / 6)
      .def_static("zipf",
                  [](double phase_mean, int support, double exponent) {
                    return SizeDistribution(ZipfPhases{phase_mean, support, exponent});
                  },
                  py::arg("phase_mean") = 1.0, py::arg("support") = 200,
                  py::arg("exponent") = 2.0)
      .def_static("by_name", &SizeDistribution::by_name)
      .def_property_readonly("kind", &SizeDistribution::kind)
      .def("moments",
           [](const SizeDistribution& d) {
             const auto mo = d.moments();
             return py::make_tuple(mo.mean, mo.stddev);
           })
      .def("sample",
           [](const SizeDistribution& d, std::size_t n, std::uint64_t seed) {
             Rng rng(seed);
             std::vector<double> out(n);
             for (double& v : out) v = d.sample(rng);
             return out;
           },
           py::arg("n") = 1, py::arg("seed") = 1);

  // Simulator.
  py::class_<RandomAssignmentSpec>(m, "RandomAssignmentSpec")
      .def(py::init<int, double>(), py::arg("servers_per_job"),
           py::arg("total_rate"))
      .def_readwrite("servers_per_job", &RandomAssignmentSpec::servers_per_job)
      .def_readwrite("total_rate", &RandomAssignmentSpec::total_rate);

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init([](std::shared_ptr<const ClusterModel> model,
                       std::vector<double> arrival_rates, SizeDistribution dist,
                       double m, std::uint64_t warmup, std::uint64_t events,
                       std::uint64_t seed,
                       std::optional<RandomAssignmentSpec> random_assignment,
                       bool debug_checks, int occupancy_cap) {
             SimConfig cfg;
             cfg.model = std::move(model);
             cfg.arrival_rates = std::move(arrival_rates);
             cfg.size_dist = std::move(dist);
             cfg.interruptions_per_job = m;
             cfg.warmup_events = warmup;
             cfg.measured_events = events;
             cfg.seed = seed;
             cfg.random_assignment = random_assignment;
             cfg.debug_checks = debug_checks;
             cfg.occupancy_cap = occupancy_cap;
             return cfg;
           }),
           py::arg("model"), py::arg("arrival_rates") = std::vector<double>{},
           py::arg("size_dist") = SizeDistribution(),
           py::arg("m") = 0.0, py::arg("warmup") = 100000,
           py::arg("events") = 100000, py::arg("seed") = 1,
           py::arg("random_assignment") = std::nullopt,
           py::arg("debug_checks") = false, py::arg("occupancy_cap") = -1)
      .def_readwrite("interruptions_per_job", &SimConfig::interruptions_per_job)
      .def_readwrite("warmup_events", &SimConfig::warmup_events)
      .def_readwrite("measured_events", &SimConfig::measured_events)
      .def_readwrite("seed", &SimConfig::seed);

  py::class_<ClassStats>(m, "ClassStats")
      .def_readonly("completions", &ClassStats::completions)
      .def_readonly("mean_sojourn", &ClassStats::mean_sojourn)
      .def_readonly("time_avg_jobs", &ClassStats::time_avg_jobs)
      .def_readonly("completion_rate", &ClassStats::completion_rate);

  py::class_<RunStats>(m, "RunStats")
      .def_readonly("per_class", &RunStats::per_class)
      .def_readonly("measured_time", &RunStats::measured_time)
      .def_readonly("events_applied", &RunStats::events_applied)
      .def_readonly("total_completions", &RunStats::total_completions)
      .def_readonly("interruptions_per_completion",
                    &RunStats::interruptions_per_completion)
      .def_readonly("max_work_conservation_error",
                    &RunStats::max_work_conservation_error)
      .def_readonly("seed", &RunStats::seed)
      .def_readonly("occupancy", &RunStats::occupancy);

  m.def("simulate", &simulate, py::arg("config"),
        py::call_guard<py::gil_scoped_release>());

  py::class_<ReplicateResult>(m, "ReplicateResult")
      .def_readonly("runs", &ReplicateResult::runs)
      .def_readonly("mean_size", &ReplicateResult::mean_size)
      .def_readonly("delay_mean", &ReplicateResult::delay_mean)
      .def_readonly("delay_ci_half", &ReplicateResult::delay_ci_half)
      .def_readonly("gamma_mean", &ReplicateResult::gamma_mean)
      .def_readonly("gamma_ci_half", &ReplicateResult::gamma_ci_half)
      .def_readonly("mean_jobs_mean", &ReplicateResult::mean_jobs_mean)
      .def_readonly("interruptions_per_completion",
                    &ReplicateResult::interruptions_per_completion);

  m.def("replicate", &replicate, py::arg("config"), py::arg("runs"),
        py::arg("max_workers") = 0, py::call_guard<py::gil_scoped_release>());

  // Scenarios.
  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("loads", &Scenario::loads)
      .def_readonly("m_values", &Scenario::m_values)
      .def("rates_for_load", &Scenario::rates_for_load)
      .def("num_stat_classes", &Scenario::num_stat_classes);

  m.def("scenario_from_json", &scenario_from_json_text, py::arg("text"));
  m.def("load_scenario_file", &load_scenario_file, py::arg("path"));
  m.def("builtin_scenario", &builtin_scenario, py::arg("name"));
  m.def("make_sim_config", &make_sim_config, py::arg("scenario"),
        py::arg("load"), py::arg("m"));
  m.def("analyze_load_point", &analyze_load_point, py::arg("scenario"),
        py::arg("load"), py::arg("tolerance") = 1e-10);
}
