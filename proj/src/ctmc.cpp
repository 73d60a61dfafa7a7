#include "clusterq/ctmc.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace clusterq {

std::size_t CtmcSolution::index_of(const ClassSeq& state) const {
  auto it = index.find(state);
  if (it == index.end())
    throw std::invalid_argument("state outside the truncated space");
  return it->second;
}

CtmcSolution ctmc_oracle(const ClusterModel& model, const WorkloadSpec& wl,
                         int max_jobs, std::size_t max_states) {
  validate_workload(model, wl);
  if (max_jobs < 1) throw std::invalid_argument("max_jobs must be >= 1");

  const int N = model.num_classes();
  std::vector<int> active;
  for (int i = 0; i < N; ++i)
    if (wl.arrival_rates[i] > 0.0) active.push_back(i);
  if (active.empty())
    throw std::invalid_argument("no class has a positive arrival rate");

  CtmcSolution sol;
  sol.truncation_level = max_jobs;

  // BFS enumeration of all sequences over the active classes, by population.
  sol.states.push_back({});
  sol.index.emplace(ClassSeq{}, 0);
  std::size_t level_begin = 0;
  for (int n = 1; n <= max_jobs; ++n) {
    const std::size_t level_end = sol.states.size();
    const std::size_t next =
        sol.states.size() + (level_end - level_begin) * active.size();
    if (next > max_states)
      throw std::invalid_argument("truncated state space exceeds the cap");
    for (std::size_t k = level_begin; k < level_end; ++k) {
      for (int cls : active) {
        ClassSeq s = sol.states[k];
        s.push_back(cls);
        sol.index.emplace(s, sol.states.size());
        sol.states.push_back(std::move(s));
      }
    }
    level_begin = level_end;
  }

  // Sparse transition lists (outgoing), plus total outflow per state.
  const std::size_t n_states = sol.states.size();
  struct Edge {
    std::uint32_t to;
    double rate;
  };
  std::vector<std::vector<Edge>> out(n_states);
  std::vector<double> outflow(n_states, 0.0);
  const double sigma = wl.mean_size;

  for (std::size_t idx = 0; idx < n_states; ++idx) {
    const ClassSeq& c = sol.states[idx];
    auto& edges = out[idx];
    if (static_cast<int>(c.size()) < max_jobs) {
      ClassSeq up = c;
      up.push_back(0);
      for (int cls : active) {
        up.back() = cls;
        edges.push_back({static_cast<std::uint32_t>(sol.index.at(up)),
                         wl.arrival_rates[cls]});
      }
    }
    const auto rates = per_position_rates(model, c);
    for (std::size_t k = 0; k < c.size(); ++k) {
      if (rates[k] <= 0.0) continue;
      ClassSeq down = c;
      down.erase(down.begin() + static_cast<std::ptrdiff_t>(k));
      edges.push_back({static_cast<std::uint32_t>(sol.index.at(down)),
                       rates[k] / sigma});
    }
    for (const Edge& e : edges) outflow[idx] += e.rate;
  }

  // Uniformized power iteration: P = I + Q/Lambda is irreducible and
  // aperiodic on the truncated space, so pi P^n converges to the fixed point.
  double uniform_rate = 0.0;
  for (double f : outflow) uniform_rate = std::max(uniform_rate, f);
  uniform_rate *= 1.01;

  std::vector<double> pi(n_states, 1.0 / double(n_states));
  std::vector<double> next(n_states, 0.0);
  const long max_iterations = 2000000;
  const double target = 1e-13;
  long iter = 0;
  double residual = 0.0;
  while (iter < max_iterations) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n_states; ++i) {
      const double p = pi[i];
      next[i] += p * (1.0 - outflow[i] / uniform_rate);
      for (const Edge& e : out[i]) next[e.to] += p * (e.rate / uniform_rate);
    }
    double total = 0.0;
    for (double p : next) total += p;
    for (double& p : next) p /= total;
    ++iter;
    if (iter % 64 == 0 || iter == max_iterations) {
      double delta = 0.0;
      for (std::size_t i = 0; i < n_states; ++i)
        delta = std::max(delta, std::abs(next[i] - pi[i]));
      pi.swap(next);
      if (delta < target) break;
    } else {
      pi.swap(next);
    }
  }

  // Global balance residual, relative to the uniformization rate.
  for (std::size_t i = 0; i < n_states; ++i) next[i] = -pi[i] * outflow[i];
  for (std::size_t i = 0; i < n_states; ++i)
    for (const Edge& e : out[i]) next[e.to] += pi[i] * e.rate;
  for (std::size_t i = 0; i < n_states; ++i)
    residual = std::max(residual, std::abs(next[i]) / uniform_rate);

  sol.probabilities = std::move(pi);
  sol.iterations = iter;
  sol.residual = residual;
  return sol;
}

}  // namespace clusterq
