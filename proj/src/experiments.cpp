#include "clusterq/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "clusterq/ctmc.hpp"
#include "clusterq/random.hpp"

namespace clusterq {

namespace {

using nlohmann::json;

std::uint64_t choose(int n, int k) {
  if (k < 0 || k > n) return 0;
  std::uint64_t c = 1;
  for (int j = 1; j <= k; ++j) c = c * std::uint64_t(n - k + j) / j;
  return c;
}

std::vector<std::vector<int>> all_subsets_of_size(int n, int k) {
  std::vector<std::vector<int>> out;
  std::vector<int> pick(k);
  std::iota(pick.begin(), pick.end(), 0);
  while (true) {
    out.push_back(pick);
    int j = k - 1;
    while (j >= 0 && pick[j] == n - k + j) --j;
    if (j < 0) break;
    ++pick[j];
    for (int l = j + 1; l < k; ++l) pick[l] = pick[l - 1] + 1;
  }
  return out;
}

SizeDistribution parse_distribution(const json& j) {
  const std::string type = j.value("type", "exponential");
  if (type == "exponential") {
    Exponential e;
    e.mean = j.value("mean", e.mean);
    return SizeDistribution(e);
  }
  if (type == "bimodal" || type == "bimodal_phases") {
    BimodalPhases b;
    b.phase_mean = j.value("phase_mean", b.phase_mean);
    if (j.contains("counts")) {
      b.count1 = j["counts"].at(0).get<int>();
      b.count2 = j["counts"].at(1).get<int>();
    }
    if (j.contains("probs")) {
      b.prob1 = j["probs"].at(0).get<double>();
      b.prob2 = j["probs"].at(1).get<double>();
    }
    return SizeDistribution(b);
  }
  if (type == "hyperexponential") {
    HyperExponential h;
    if (j.contains("means")) {
      h.mean1 = j["means"].at(0).get<double>();
      h.mean2 = j["means"].at(1).get<double>();
    }
    if (j.contains("probs")) {
      h.prob1 = j["probs"].at(0).get<double>();
      h.prob2 = j["probs"].at(1).get<double>();
    }
    return SizeDistribution(h);
  }
  if (type == "zipf" || type == "zipf_phases") {
    ZipfPhases z;
    z.phase_mean = j.value("phase_mean", z.phase_mean);
    z.support = j.value("support", z.support);
    z.exponent = j.value("exponent", z.exponent);
    return SizeDistribution(z);
  }
  throw std::invalid_argument("unknown size distribution type: " + type);
}

double total_capacity_of(const Scenario& s) {
  if (s.model) return s.model->total_capacity();
  return double(s.random_assignment->num_servers);  // unit-capacity servers
}

std::string format_m(double m) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", m);
  return buf;
}

std::string format_value(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

std::vector<double> Scenario::rates_for_load(double load) const {
  if (load < 0.0 || !std::isfinite(load))
    throw std::invalid_argument("load must be finite and >= 0");
  const double total_rate = load * total_capacity_of(*this) / size_dist.mean();
  if (random_assignment) return {total_rate};

  const int n = model->num_classes();
  std::vector<double> w = weights;
  if (w.empty()) w.assign(n, 1.0);
  if (static_cast<int>(w.size()) != n)
    throw std::invalid_argument("split weights dimension does not match the model");
  const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
  if (!(wsum > 0.0)) throw std::invalid_argument("split weights must sum > 0");
  std::vector<double> rates(n);
  for (int i = 0; i < n; ++i) rates[i] = total_rate * w[i] / wsum;
  return rates;
}

int Scenario::num_stat_classes() const {
  return random_assignment ? 1 : model->num_classes();
}

Scenario scenario_from_json_text(const std::string& text) {
  const json j = json::parse(text);
  Scenario s;
  s.name = j.value("name", "scenario");

  if (j.contains("model")) {
    const auto caps = j["model"].at("capacities").get<std::vector<double>>();
    std::vector<std::vector<int>> classes;
    for (const auto& cl : j["model"].at("classes")) {
      auto servers = cl.get<std::vector<int>>();
      for (int& v : servers) --v;  // 1-based server indices in files
      classes.push_back(std::move(servers));
    }
    s.model = std::make_shared<ClusterModel>(caps, classes);
  } else if (j.contains("random_assignment")) {
    RandomAssignmentScenario ra;
    ra.num_servers = j["random_assignment"].value("servers", ra.num_servers);
    ra.servers_per_job = j["random_assignment"].value("per_job", ra.servers_per_job);
    if (ra.servers_per_job < 1 || ra.servers_per_job > ra.num_servers)
      throw std::invalid_argument("per_job must be in [1, servers]");
    s.random_assignment = ra;
  } else {
    throw std::invalid_argument("scenario needs a model or random_assignment");
  }

  if (j.contains("size_distribution"))
    s.size_dist = parse_distribution(j["size_distribution"]);
  if (j.contains("loads")) s.loads = j["loads"].get<std::vector<double>>();
  if (j.contains("lambdas"))
    s.lambdas = j["lambdas"].get<std::vector<double>>();
  if (j.contains("weights")) s.weights = j["weights"].get<std::vector<double>>();
  if (j.contains("m")) {
    if (j["m"].is_array())
      s.m_values = j["m"].get<std::vector<double>>();
    else
      s.m_values = {j["m"].get<double>()};
  }
  s.runs = j.value("runs", s.runs);
  s.events = j.value("events", s.events);
  s.warmup = j.value("warmup", s.warmup);
  s.seed = j.value("seed", s.seed);
  s.tolerance = j.value("tolerance", s.tolerance);
  s.simulate_unstable = j.value("simulate_unstable", s.simulate_unstable);

  if (s.loads.empty() && !s.lambdas)
    throw std::invalid_argument("scenario needs loads or lambdas");
  return s;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return scenario_from_json_text(buf.str());
}

Scenario builtin_scenario(const std::string& name) {
  Scenario s;
  s.name = name;
  s.loads = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
  if (name == "symmetric") {
    s.model = std::make_shared<ClusterModel>(
        std::vector<double>{1.0, 1.0, 1.0},
        std::vector<std::vector<int>>{{0, 2}, {1, 2}});
    return s;
  }
  if (name == "asymmetric") {
    s.model = std::make_shared<ClusterModel>(
        std::vector<double>{1.0, 1.0},
        std::vector<std::vector<int>>{{0, 1}, {1}});
    return s;
  }
  if (name == "random4x2") {
    s.random_assignment = RandomAssignmentScenario{4, 2};
    s.loads = {0.4, 0.7};
    return s;
  }
  throw std::invalid_argument("unknown builtin scenario: " + name);
}

std::vector<std::string> builtin_scenario_names() {
  return {"symmetric", "asymmetric", "random4x2"};
}

Scenario random_assignment_scenario(int num_servers, int servers_per_job,
                                    double total_rate, SizeDistribution dist,
                                    std::vector<double> m_values) {
  if (servers_per_job < 1 || servers_per_job > num_servers)
    throw std::invalid_argument("servers_per_job must be in [1, num_servers]");
  Scenario s;
  s.name = "random_assignment";
  s.random_assignment = RandomAssignmentScenario{num_servers, servers_per_job};
  s.size_dist = std::move(dist);
  s.lambdas = std::vector<double>{total_rate};
  if (!m_values.empty()) s.m_values = std::move(m_values);
  return s;
}

namespace {

std::shared_ptr<const ClusterModel> sim_model(const Scenario& s) {
  if (s.model) return s.model;
  const int S = s.random_assignment->num_servers;
  std::vector<int> all(S);
  std::iota(all.begin(), all.end(), 0);
  return std::make_shared<ClusterModel>(std::vector<double>(S, 1.0),
                                        std::vector<std::vector<int>>{all});
}

/// Expanded model for the analysis side of a random-assignment scenario;
/// null when C(S, d) > 20.
std::shared_ptr<const ClusterModel> expanded_model(
    const RandomAssignmentScenario& ra) {
  if (choose(ra.num_servers, ra.servers_per_job) > 20) return nullptr;
  return std::make_shared<ClusterModel>(
      std::vector<double>(ra.num_servers, 1.0),
      all_subsets_of_size(ra.num_servers, ra.servers_per_job));
}

}  // namespace

SimConfig make_sim_config(const Scenario& scenario, double load, double m) {
  SimConfig cfg;
  cfg.model = sim_model(scenario);
  cfg.size_dist = scenario.size_dist;
  cfg.interruptions_per_job = m;
  cfg.warmup_events = scenario.warmup;
  cfg.measured_events = scenario.events;
  cfg.seed = scenario.seed;
  const auto rates =
      scenario.lambdas ? *scenario.lambdas : scenario.rates_for_load(load);
  if (scenario.random_assignment) {
    if (rates.size() != 1)
      throw std::invalid_argument("random-assignment scenarios take one total rate");
    cfg.random_assignment = RandomAssignmentSpec{
        scenario.random_assignment->servers_per_job, rates[0]};
  } else {
    cfg.arrival_rates = rates;
  }
  return cfg;
}

MetricsReport analyze_load_point(const Scenario& scenario, double load,
                                 double tolerance) {
  const auto rates =
      scenario.lambdas ? *scenario.lambdas : scenario.rates_for_load(load);
  MetricsOptions opts;
  opts.tolerance = tolerance;
  if (scenario.model)
    return performance_metrics(*scenario.model, {rates, scenario.size_dist.mean()},
                               opts);
  auto expanded = expanded_model(*scenario.random_assignment);
  if (!expanded)
    throw std::invalid_argument(
        "analytical metrics need C(S, d) <= 20 job classes");
  const int n = expanded->num_classes();
  std::vector<double> lambdas(n, rates.at(0) / double(n));
  return performance_metrics(*expanded, {lambdas, scenario.size_dist.mean()}, opts);
}

ScenarioResult run_scenario(const Scenario& scenario_in, const RunOverrides& ov) {
  Scenario scenario = scenario_in;
  if (ov.loads) {
    scenario.loads = *ov.loads;
    scenario.lambdas.reset();
  }
  if (ov.m_values) scenario.m_values = *ov.m_values;
  if (ov.runs) scenario.runs = *ov.runs;
  if (ov.events) scenario.events = *ov.events;
  if (ov.warmup) scenario.warmup = *ov.warmup;
  if (ov.seed) scenario.seed = *ov.seed;
  if (ov.tolerance) scenario.tolerance = *ov.tolerance;
  if (ov.dist_name) scenario.size_dist = SizeDistribution::by_name(*ov.dist_name);

  ScenarioResult result;
  result.name = scenario.name;
  result.m_values = scenario.m_values;
  result.num_classes = scenario.num_stat_classes();

  const double sigma = scenario.size_dist.mean();
  const double capacity = total_capacity_of(scenario);

  std::vector<double> loads = scenario.loads;
  if (scenario.lambdas) {
    const double total =
        std::accumulate(scenario.lambdas->begin(), scenario.lambdas->end(), 0.0);
    loads = {total * sigma / capacity};
  }

  std::shared_ptr<const ClusterModel> analysis_model = scenario.model;
  if (scenario.random_assignment)
    analysis_model = expanded_model(*scenario.random_assignment);

  for (double load : loads) {
    LoadPointResult point;
    point.load = load;
    point.arrival_rates =
        scenario.lambdas ? *scenario.lambdas : scenario.rates_for_load(load);

    // Stability: exact subset check where classes are enumerable.
    std::vector<double> analysis_rates = point.arrival_rates;
    if (scenario.random_assignment && analysis_model) {
      const int n = analysis_model->num_classes();
      analysis_rates.assign(n, point.arrival_rates[0] / double(n));
    }
    if (analysis_model && analysis_model->num_classes() <= 20) {
      const auto st = check_stability(*analysis_model, {analysis_rates, sigma});
      point.stable = st.stable;
      point.stability_exact = true;
    } else {
      point.stable = load < 1.0;
      point.stability_exact = false;
    }

    const int stat_classes = result.num_classes;
    const bool empty_load = load == 0.0;
    if (point.stable && analysis_model) {
      point.has_analytical = true;
      point.analytical_gamma.assign(stat_classes, kNaN);
      point.analytical_delta.assign(stat_classes, kNaN);
      if (empty_load) {
        // Light-traffic limit: an arriving job finds an empty system.
        for (int i = 0; i < stat_classes; ++i) {
          const int cls = scenario.random_assignment ? 0 : i;
          point.analytical_gamma[i] = analysis_model->class_peak_rate(cls);
          point.analytical_delta[i] = sigma / point.analytical_gamma[i];
        }
      } else {
        MetricsOptions opts;
        opts.tolerance = scenario.tolerance;
        opts.skip_stability_check = true;
        try {
          const auto report =
              performance_metrics(*analysis_model, {analysis_rates, sigma}, opts);
          for (int i = 0; i < stat_classes; ++i) {
            point.analytical_gamma[i] = report.service_rate[i];
            point.analytical_delta[i] = report.delay[i];
          }
        } catch (const std::runtime_error&) {
          // summation did not converge within the state budget at this load;
          // leave the analytical column empty and keep simulating
          point.has_analytical = false;
        }
      }
    }

    const bool do_sim = !ov.analytical_only && scenario.runs > 0 && !empty_load &&
                        (point.stable || scenario.simulate_unstable);
    if (do_sim) {
      point.simulated = true;
      for (double m : scenario.m_values) {
        SimConfig cfg = make_sim_config(scenario, load, m);
        const auto rep = replicate(cfg, scenario.runs, ov.max_workers);
        point.sim_gamma.push_back(rep.gamma_mean);
        point.sim_gamma_ci.push_back(rep.gamma_ci_half);
        point.sim_delta.push_back(rep.delay_mean);
        point.sim_delta_ci.push_back(rep.delay_ci_half);
      }
    }
    result.points.push_back(std::move(point));
  }
  return result;
}

namespace {

void write_metric_table(const ScenarioResult& r, const std::string& path,
                        bool gamma, char sep, bool comment_header) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  if (comment_header) os << "# ";
  os << "load" << sep << "class" << sep << "analytical";
  for (double m : r.m_values)
    os << sep << "m" << format_m(m) << "_mean" << sep << "m" << format_m(m)
       << "_ci95";
  os << sep << "stable" << sep << "stability_check\n";

  for (const auto& p : r.points) {
    for (int c = 0; c < r.num_classes; ++c) {
      os << format_value(p.load) << sep << c + 1 << sep;
      if (!p.stable)
        os << "divergent";
      else if (p.has_analytical)
        os << format_value(gamma ? p.analytical_gamma[c] : p.analytical_delta[c]);
      for (std::size_t mi = 0; mi < r.m_values.size(); ++mi) {
        os << sep;
        if (p.simulated)
          os << format_value(gamma ? p.sim_gamma[mi][c] : p.sim_delta[mi][c]);
        os << sep;
        if (p.simulated)
          os << format_value(gamma ? p.sim_gamma_ci[mi][c] : p.sim_delta_ci[mi][c]);
      }
      os << sep << (p.stable ? 1 : 0) << sep
         << (p.stability_exact ? "exact" : "load_bound") << '\n';
    }
  }
}

}  // namespace

void write_scenario_csv(const ScenarioResult& result, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_metric_table(result, out_dir + "/gamma.csv", true, ',', false);
  write_metric_table(result, out_dir + "/delta.csv", false, ',', false);
}

void write_scenario_gnuplot(const ScenarioResult& result,
                            const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  write_metric_table(result, out_dir + "/gamma.dat", true, ' ', true);
  write_metric_table(result, out_dir + "/delta.dat", false, ' ', true);
}

// ---------------------------------------------------------------------------
// Validation suite.

namespace {

template <typename F>
void for_each_state_up_to(int num_classes, int max_total, F&& f) {
  Counts x(num_classes, 0);
  auto rec = [&](auto&& self, int depth, int budget) -> void {
    if (depth == num_classes) {
      f(std::as_const(x));
      return;
    }
    for (int v = 0; v <= budget; ++v) {
      x[depth] = v;
      self(self, depth + 1, budget - v);
    }
    x[depth] = 0;
  };
  rec(rec, 0, max_total);
}

std::string counts_str(const Counts& x) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? "," : "") << x[i];
  os << ')';
  return os.str();
}

}  // namespace

std::vector<CheckResult> run_validation_suite(const ClusterModel& model,
                                              const WorkloadSpec& workload) {
  validate_workload(model, workload);
  std::vector<CheckResult> results;
  const int N = model.num_classes();
  char buf[256];

  // OI axioms on an exhaustive (small N) or sampled state set.
  {
    std::vector<ClassSeq> states;
    double count = 1;
    for (int l = 1; l <= 4; ++l) count = count * N + 1;
    if (count <= 20000) {
      states = enumerate_states(N, 4);
    } else {
      Rng rng(42);
      for (int k = 0; k < 1000; ++k) {
        ClassSeq s(1 + rng.uniform_int(5));
        for (int& v : s) v = rng.uniform_int(N);
        states.push_back(std::move(s));
      }
    }
    const auto report = check_oi_axioms(model, states);
    std::snprintf(buf, sizeof(buf), "%ld states, %zu violations",
                  report.states_checked, report.violations.size());
    results.push_back({"oi-axioms", report.ok(), buf});
  }

  // Submodularity of mu as a set function (exhaustive for N <= 10).
  if (N <= 10) {
    bool ok = true;
    const ClassMask full = model.full_mask();
    for (ClassMask b = 0; b <= full && ok; ++b) {
      for (ClassMask a = b;; a = (a - 1) & b) {  // a runs over subsets of b
        for (int i = 0; i < N && ok; ++i) {
          const ClassMask bit = ClassMask{1} << i;
          if (b & bit) continue;
          const double gain_a = model.rate_of_set(a | bit) - model.rate_of_set(a);
          const double gain_b = model.rate_of_set(b | bit) - model.rate_of_set(b);
          if (gain_a < gain_b - 1e-12) ok = false;
        }
        if (a == 0 || !ok) break;
      }
      if (b == full) break;
    }
    results.push_back({"submodularity", ok, "diminishing returns over all subset pairs"});
  }

  // Positional decomposition: rates sum to mu(A(c)), repeats get zero.
  {
    bool ok = true;
    Rng rng(7);
    for (int k = 0; k < 500 && ok; ++k) {
      ClassSeq c(rng.uniform_int(7));
      for (int& v : c) v = rng.uniform_int(N);
      const auto rates = per_position_rates(model, c);
      const double sum = std::accumulate(rates.begin(), rates.end(), 0.0);
      const double mu = model.rate_of_set(active_set(counts_of(c, N)));
      if (std::abs(sum - mu) > 1e-9 * std::max(1.0, mu)) ok = false;
      std::vector<char> seen(N, 0);
      for (std::size_t p = 0; p < c.size(); ++p) {
        if (seen[c[p]] && rates[p] != 0.0) ok = false;
        seen[c[p]] = 1;
      }
    }
    results.push_back({"positional-rates", ok, "500 random states"});
  }

  // Stability, witness, and the comparison bound (or divergence when unstable).
  {
    const auto st = check_stability(model, workload);
    if (st.stable) {
      const auto bound = comparison_bound_check(model, workload, st.eta, 6);
      std::snprintf(buf, sizeof(buf),
                    "stable; worst slack %.6g; Phi <= Psi over %zu states "
                    "(worst log ratio %.3g)",
                    st.worst_slack, bound.states_checked, bound.worst_log_ratio);
      results.push_back({"stability-witness", bound.holds, buf});
    } else {
      const auto partial = normalization_partial_sums(model, workload, 25);
      bool grows = true;
      for (std::size_t l = 2; l < partial.size(); ++l) {
        const double mass = std::exp(partial[l]) - std::exp(partial[l - 1]);
        const double prev = std::exp(partial[l - 1]) - std::exp(partial[l - 2]);
        if (!(mass > prev)) grows = false;
      }
      std::snprintf(buf, sizeof(buf),
                    "unstable (classes %s saturate); normalization series diverges",
                    counts_str(Counts(st.violating_set.begin(),
                                      st.violating_set.end()))
                        .c_str());
      results.push_back({"instability-divergence", grows, buf});
    }
  }

  // Balance property, Pareto efficiency, capacity-set membership.
  {
    BalanceTable table(model);
    bool balance_ok = true, pareto_ok = true, capacity_ok = true;
    for_each_state_up_to(N, 6, [&](const Counts& x) {
      if (total_jobs(x) == 0) return;
      const auto phi = bf_rates(table, x);
      Counts y = x;
      for (int i = 0; i < N; ++i) {
        if (x[i] == 0) continue;
        for (int j = i + 1; j < N; ++j) {
          if (x[j] == 0) continue;
          --y[i];
          const auto phi_mi = bf_rates(table, y);
          ++y[i];
          --y[j];
          const auto phi_mj = bf_rates(table, y);
          ++y[j];
          const double lhs = phi[i] * phi_mi[j];
          const double rhs = phi[j] * phi_mj[i];
          if (std::abs(lhs - rhs) > 1e-10 * std::max({1.0, lhs, rhs}))
            balance_ok = false;
        }
      }
      const ClassMask active = active_set(x);
      const double mu = model.rate_of_set(active);
      double sum = 0.0;
      for (int i = 0; i < N; ++i) sum += phi[i];
      if (std::abs(sum - mu) > 1e-10 * std::max(1.0, mu)) pareto_ok = false;
      const ClassMask full = model.full_mask();
      for (ClassMask a = 1; a <= full; ++a) {
        double s = 0.0;
        for (ClassMask b = a; b; b &= b - 1) {
          const int i = std::countr_zero(b);
          s += phi[i];
        }
        if (s > model.rate_of_set(a) + 1e-10 * std::max(1.0, s)) capacity_ok = false;
        if (a == full) break;
      }
    });
    results.push_back({"balance-property", balance_ok, "states with <= 6 jobs"});
    results.push_back({"pareto-efficiency", pareto_ok, "states with <= 6 jobs"});
    results.push_back({"capacity-set", capacity_ok, "all subsets, states with <= 6 jobs"});
  }

  // Average-rate equivalence with the ordering oracle.
  {
    BalanceTable table(model);
    std::vector<double> lambdas = workload.arrival_rates;
    for (double& l : lambdas)
      if (l <= 0.0) l = 1.0;  // the equivalence holds for any positive rates
    bool ok = true;
    double worst = 0.0;
    for_each_state_up_to(N, 4, [&](const Counts& x) {
      if (total_jobs(x) == 0) return;
      const auto oracle = avg_rates_oracle(model, lambdas, x);
      const auto direct = bf_rates(table, x);
      for (int i = 0; i < N; ++i) {
        const double scale = std::max(1.0, std::abs(direct[i]));
        worst = std::max(worst, std::abs(oracle[i] - direct[i]) / scale);
      }
    });
    ok = worst <= 1e-8;
    std::snprintf(buf, sizeof(buf), "worst relative gap %.3g over states with <= 4 jobs",
                  worst);
    results.push_back({"average-rate-equivalence", ok, buf});
  }

  // Product form against the truncated Markov chain (small chains only).
  {
    int active = 0;
    for (double l : workload.arrival_rates) active += l > 0.0;
    double states = 1, level = 1;
    for (int l = 1; l <= 6; ++l) {
      level *= std::max(active, 1);
      states += level;
    }
    if (active >= 1 && states <= 6000) {
      const auto sol = ctmc_oracle(model, workload, 6);
      double interior_mass = 0.0, worst = 0.0;
      std::vector<double> weights(sol.size(), kNegInf);
      double wmax = kNegInf;
      for (std::size_t k = 0; k < sol.size(); ++k) {
        if (static_cast<int>(sol.states[k].size()) > 3) continue;
        weights[k] = detailed_log_weight(model, workload, sol.states[k]);
        wmax = std::max(wmax, weights[k]);
        interior_mass += sol.probabilities[k];
      }
      double wsum = 0.0;
      for (double w : weights)
        if (w != kNegInf) wsum += std::exp(w - wmax);
      for (std::size_t k = 0; k < sol.size(); ++k) {
        if (weights[k] == kNegInf) continue;
        const double expected = std::exp(weights[k] - wmax) / wsum;
        const double got = sol.probabilities[k] / interior_mass;
        worst = std::max(worst, std::abs(got - expected) / expected);
      }
      std::snprintf(buf, sizeof(buf),
                    "worst relative gap %.3g on interior states (residual %.3g)",
                    worst, sol.residual);
      results.push_back({"product-form-ctmc", worst <= 1e-6, buf});
    }
  }

  // Metric identities (stable workloads with traffic only).
  {
    const auto st = check_stability(model, workload);
    bool any_traffic = false;
    for (double l : workload.arrival_rates) any_traffic = any_traffic || l > 0.0;
    if (st.stable && any_traffic) {
      MetricsOptions opts;
      opts.skip_stability_check = true;
      MetricsReport report;
      for (double tol : {1e-10, 1e-8, 1e-6}) {
        opts.tolerance = tol;
        try {
          report = performance_metrics(model, workload, opts);
          break;
        } catch (const std::runtime_error&) {
          if (tol == 1e-6) throw;
        }
      }
      bool ok = true;
      for (int i = 0; i < N; ++i) {
        if (workload.arrival_rates[i] <= 0.0) continue;
        const double prod = report.delay[i] * report.service_rate[i];
        if (std::abs(prod - workload.mean_size) > 1e-12 * workload.mean_size)
          ok = false;
        if (report.service_rate[i] > model.class_peak_rate(i) + 1e-9) ok = false;
        const double little = workload.arrival_rates[i] * report.delay[i];
        if (std::abs(little - report.mean_jobs[i]) >
            1e-9 * std::max(1.0, report.mean_jobs[i]))
          ok = false;
      }
      std::snprintf(buf, sizeof(buf),
                    "delta*gamma = sigma, gamma <= peak, Little's law "
                    "(truncated at level %d)",
                    report.truncation_level);
      results.push_back({"metric-identities", ok, buf});

      if (N == 2) {
        const double s1 = model.rate_of_set(ClassMask{1});
        const double s2 = model.rate_of_set(ClassMask{2});
        const double s12 = model.rate_of_set(ClassMask{3});
        const double mu3 = (s1 + s2 - s12) / workload.mean_size;
        const double mu1 = s1 / workload.mean_size - mu3;
        const double mu2 = s2 / workload.mean_size - mu3;
        const auto tree = tree_closed_form(mu1, mu2, mu3,
                                           workload.arrival_rates[0],
                                           workload.arrival_rates[1]);
        const double g1 = tree.gamma1 * workload.mean_size;
        const double g2 = tree.gamma2 * workload.mean_size;
        const bool match =
            std::abs(g1 - report.service_rate[0]) <= 1e-6 * std::max(1.0, g1) &&
            std::abs(g2 - report.service_rate[1]) <= 1e-6 * std::max(1.0, g2);
        std::snprintf(buf, sizeof(buf),
                      "closed form (%.8g, %.8g) vs summation (%.8g, %.8g)", g1,
                      g2, report.service_rate[0], report.service_rate[1]);
        results.push_back({"tree-closed-form", match, buf});
      }
    }
  }

  return results;
}

}  // namespace clusterq
