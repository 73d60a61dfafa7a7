#include "clusterq/analysis.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace clusterq {

namespace {

std::string format_subset(std::span<const int> classes) {
  std::ostringstream os;
  os << '{';
  for (std::size_t i = 0; i < classes.size(); ++i)
    os << (i ? "," : "") << classes[i] + 1;
  os << '}';
  return os.str();
}

}  // namespace

void validate_workload(const ClusterModel& model, const WorkloadSpec& wl) {
  if (static_cast<int>(wl.arrival_rates.size()) != model.num_classes())
    throw std::invalid_argument("arrival-rate dimension does not match the model");
  for (double l : wl.arrival_rates)
    if (!std::isfinite(l) || l < 0.0)
      throw std::invalid_argument("arrival rates must be finite and >= 0");
  if (!std::isfinite(wl.mean_size) || wl.mean_size <= 0.0)
    throw std::invalid_argument("mean job size must be positive");
}

double BalanceTable::log_phi(std::span<const int> x) {
  const int N = model_->num_classes();
  if (static_cast<int>(x.size()) != N)
    throw std::invalid_argument("aggregate state dimension does not match the model");
  for (int v : x)
    if (v < 0) throw std::invalid_argument("negative job count");

  Counts root(x.begin(), x.end());
  {
    auto it = memo_.find(root);
    if (it != memo_.end()) return it->second;
  }

  std::vector<Counts> stack{root};
  while (!stack.empty()) {
    Counts state = stack.back();
    if (memo_.count(state)) {
      stack.pop_back();
      continue;
    }
    const ClassMask active = active_set(state);
    if (active == 0) {
      memo_.emplace(std::move(state), 0.0);
      stack.pop_back();
      continue;
    }
    const double mu = model_->rate_of_set(active);
    if (!(mu > 0.0))
      throw std::logic_error("mu(A(x)) = 0 for a non-empty active set");

    bool ready = true;
    double acc = kNegInf;
    for (ClassMask m = active; m; m &= m - 1) {
      const int i = std::countr_zero(m);
      --state[i];
      auto it = memo_.find(state);
      if (it == memo_.end()) {
        stack.push_back(state);
        ready = false;
      } else if (ready) {
        acc = log_add(acc, it->second);
      }
      ++state[i];
    }
    if (ready) {
      memo_.emplace(std::move(state), acc - std::log(mu));
      stack.pop_back();
    }
  }
  return memo_.at(root);
}

double detailed_log_weight(const ClusterModel& model, const WorkloadSpec& wl,
                           std::span<const int> seq) {
  validate_workload(model, wl);
  const int N = model.num_classes();
  if (N > 64) throw std::invalid_argument("analysis operations need <= 64 classes");
  double lw = 0.0;
  ClassMask prefix = 0;
  for (int cls : seq) {
    if (cls < 0 || cls >= N) throw std::invalid_argument("class index out of range");
    if (wl.arrival_rates[cls] <= 0.0)
      throw std::invalid_argument("state contains a class with zero arrival rate");
    prefix |= ClassMask{1} << cls;
    // nu(prefix) = mu(prefix)/sigma, so each factor is lambda*sigma/mu.
    lw += std::log(wl.arrival_rates[cls] * wl.mean_size) -
          std::log(model.rate_of_set(prefix));
  }
  return lw;
}

double aggregate_log_weight(const ClusterModel& model, const WorkloadSpec& wl,
                            BalanceTable& table, std::span<const int> x) {
  validate_workload(model, wl);
  if (&table.model() != &model)
    throw std::invalid_argument("balance table belongs to a different model");
  double lw = table.log_phi(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] == 0) continue;
    if (wl.arrival_rates[i] <= 0.0)
      throw std::invalid_argument("state contains a class with zero arrival rate");
    // Phi_nu(x) = sigma^{|x|} Phi_mu(x); fold sigma into the per-job factor.
    lw += x[i] * std::log(wl.arrival_rates[i] * wl.mean_size);
  }
  return lw;
}

StabilityReport check_stability(const ClusterModel& model, const WorkloadSpec& wl) {
  validate_workload(model, wl);
  const int N = model.num_classes();

  std::vector<int> active;
  for (int i = 0; i < N; ++i)
    if (wl.arrival_rates[i] > 0.0) active.push_back(i);
  const int k = static_cast<int>(active.size());
  if (k > 20)
    throw std::invalid_argument(
        "stability check enumerates all class subsets; more than 20 active "
        "classes is refused rather than silently approximated");

  StabilityReport report;
  if (k == 0) {  // no traffic: vacuously stable
    report.stable = true;
    report.eta.assign(N, 0.0);
    report.worst_slack = model.total_capacity() / wl.mean_size;
    return report;
  }

  const std::uint64_t subsets = std::uint64_t{1} << k;
  std::vector<double> lambda_sum(subsets, 0.0);
  double worst_slack = std::numeric_limits<double>::infinity();
  std::uint64_t worst_mask = 0;
  // per-class min over subsets containing i of slack(A)/|A|, for the witness
  std::vector<double> min_share(k, std::numeric_limits<double>::infinity());

  for (std::uint64_t m = 1; m < subsets; ++m) {
    const std::uint64_t low_bits = m & (m - 1);
    const int j = std::countr_zero(m);
    lambda_sum[m] = lambda_sum[low_bits] + wl.arrival_rates[active[j]];

    ClassMask global = 0;
    for (std::uint64_t b = m; b; b &= b - 1)
      global |= ClassMask{1} << active[std::countr_zero(b)];
    const double nu = model.rate_of_set(global) / wl.mean_size;
    const double slack = nu - lambda_sum[m];
    if (slack < worst_slack) {
      worst_slack = slack;
      worst_mask = m;
    }
    const double share = slack / double(std::popcount(m));
    for (std::uint64_t b = m; b; b &= b - 1) {
      const int j2 = std::countr_zero(b);
      min_share[j2] = std::min(min_share[j2], share);
    }
  }

  report.worst_slack = worst_slack;
  if (worst_slack <= 0.0) {
    report.stable = false;
    for (std::uint64_t b = worst_mask; b; b &= b - 1)
      report.violating_set.push_back(active[std::countr_zero(b)]);
    return report;
  }

  report.stable = true;
  report.eta.assign(N, 0.0);
  for (int j = 0; j < k; ++j)
    report.eta[active[j]] = wl.arrival_rates[active[j]] + 0.5 * min_share[j];

  // Re-verify the witness before returning it.
  std::vector<double> eta_sum(subsets, 0.0);
  for (std::uint64_t m = 1; m < subsets; ++m) {
    const int j = std::countr_zero(m);
    eta_sum[m] = eta_sum[m & (m - 1)] + report.eta[active[j]];
    ClassMask global = 0;
    for (std::uint64_t b = m; b; b &= b - 1)
      global |= ClassMask{1} << active[std::countr_zero(b)];
    if (!(eta_sum[m] < model.rate_of_set(global) / wl.mean_size))
      throw std::logic_error("stability witness failed re-validation");
  }
  for (int j = 0; j < k; ++j)
    if (!(wl.arrival_rates[active[j]] < report.eta[active[j]]))
      throw std::logic_error("stability witness failed re-validation");
  return report;
}

namespace {

// Enumerates x over `active` with sum <= x_max, calling f on each state.
template <typename F>
void for_each_bounded_state(Counts& x, std::span<const int> active, int depth,
                            int budget, F&& f) {
  if (depth == static_cast<int>(active.size())) {
    f(x);
    return;
  }
  for (int v = 0; v <= budget; ++v) {
    x[active[depth]] = v;
    for_each_bounded_state(x, active, depth + 1, budget - v, f);
  }
  x[active[depth]] = 0;
}

}  // namespace

BoundCheckReport comparison_bound_check(const ClusterModel& model,
                                        const WorkloadSpec& wl,
                                        std::span<const double> eta, int x_max) {
  validate_workload(model, wl);
  const int N = model.num_classes();
  if (static_cast<int>(eta.size()) != N)
    throw std::invalid_argument("eta dimension does not match the model");

  std::vector<int> active;
  for (int i = 0; i < N; ++i)
    if (wl.arrival_rates[i] > 0.0) {
      if (!(eta[i] > 0.0))
        throw std::invalid_argument("eta must be positive for active classes");
      active.push_back(i);
    }

  BalanceTable table(model);
  BoundCheckReport report;
  const double log_sigma = std::log(wl.mean_size);
  Counts x(N, 0);
  for_each_bounded_state(x, active, 0, x_max, [&](const Counts& state) {
    // Phi_nu(x) = sigma^{|x|} Phi_mu(x); Psi(x) = prod eta^{-x}.
    double lhs = table.log_phi(state) + double(total_jobs(state)) * log_sigma;
    double log_psi = 0.0;
    for (int i : active) log_psi -= state[i] * std::log(eta[i]);
    const double ratio = lhs - log_psi;
    if (ratio > report.worst_log_ratio) {
      report.worst_log_ratio = ratio;
      report.worst_state = state;
    }
    ++report.states_checked;
  });
  report.holds = report.worst_log_ratio <= 1e-9;
  return report;
}

std::vector<double> bf_rates(BalanceTable& table, std::span<const int> x) {
  const int N = table.model().num_classes();
  if (static_cast<int>(x.size()) != N)
    throw std::invalid_argument("aggregate state dimension does not match the model");
  std::vector<double> rates(N, 0.0);
  const double log_phi_x = table.log_phi(x);
  Counts y(x.begin(), x.end());
  for (int i = 0; i < N; ++i) {
    if (x[i] == 0) continue;
    --y[i];
    rates[i] = std::exp(table.log_phi(y) - log_phi_x);
    ++y[i];
  }
  return rates;
}

std::vector<double> avg_rates_oracle(const ClusterModel& model,
                                     std::span<const double> arrival_rates,
                                     std::span<const int> x,
                                     std::uint64_t max_orderings) {
  const int N = model.num_classes();
  if (static_cast<int>(x.size()) != N || static_cast<int>(arrival_rates.size()) != N)
    throw std::invalid_argument("dimension mismatch");

  double log_orderings = std::lgamma(double(total_jobs(x)) + 1.0);
  for (int i = 0; i < N; ++i) {
    if (x[i] < 0) throw std::invalid_argument("negative job count");
    if (x[i] > 0 && !(arrival_rates[i] > 0.0))
      throw std::invalid_argument("state contains a class with zero arrival rate");
    log_orderings -= std::lgamma(double(x[i]) + 1.0);
  }
  if (log_orderings > std::log(double(max_orderings)) + 1e-9)
    throw std::invalid_argument("too many orderings to enumerate");

  ClassSeq seq;
  for (int i = 0; i < N; ++i) seq.insert(seq.end(), x[i], i);

  WorkloadSpec wl{std::vector<double>(arrival_rates.begin(), arrival_rates.end()),
                  1.0};
  struct Term {
    double log_w;
    std::vector<double> first_rate;
  };
  std::vector<Term> terms;
  std::vector<char> seen(N, 0);
  do {
    Term t;
    t.log_w = detailed_log_weight(model, wl, seq);
    t.first_rate.assign(N, 0.0);
    auto rates = per_position_rates(model, seq);
    std::fill(seen.begin(), seen.end(), 0);
    for (std::size_t k = 0; k < seq.size(); ++k) {
      if (!seen[seq[k]]) {
        seen[seq[k]] = 1;
        t.first_rate[seq[k]] = rates[k];
      }
    }
    terms.push_back(std::move(t));
  } while (std::next_permutation(seq.begin(), seq.end()));

  double max_lw = kNegInf;
  for (const Term& t : terms) max_lw = std::max(max_lw, t.log_w);
  double total = 0.0;
  std::vector<double> weighted(N, 0.0);
  for (const Term& t : terms) {
    const double w = std::exp(t.log_w - max_lw);
    total += w;
    for (int i = 0; i < N; ++i) weighted[i] += w * t.first_rate[i];
  }
  for (int i = 0; i < N; ++i) weighted[i] /= total;
  return weighted;
}

// ---------------------------------------------------------------------------
// Level-by-level summation over compositions.

namespace {

// Binomial table, C(n,k) for k <= cols. Values stay far below 2^53 for the
// state budgets in use.
class BinomialTable {
 public:
  BinomialTable(int rows, int cols) : cols_(cols + 1), c_((rows + 1) * (cols + 1), 0) {
    for (int n = 0; n <= rows; ++n) {
      at(n, 0) = 1;
      for (int k = 1; k <= std::min(n, cols); ++k)
        at(n, k) = (n == k) ? 1 : at(n - 1, k - 1) + at(n - 1, k);
    }
  }
  std::uint64_t operator()(int n, int k) const {
    if (k < 0 || k > n) return 0;
    return c_[std::size_t(n) * cols_ + k];
  }

 private:
  std::uint64_t& at(int n, int k) { return c_[std::size_t(n) * cols_ + k]; }
  int cols_;
  std::vector<std::uint64_t> c_;
};

// Number of compositions of n into k non-negative parts.
inline std::uint64_t composition_count(const BinomialTable& binom, int n, int k) {
  return binom(n + k - 1, k - 1);
}

// Rank of a composition within the lexicographically ascending enumeration of
// compositions of its own total into k parts.
inline std::uint64_t composition_rank(const BinomialTable& binom,
                                      std::span<const int> x) {
  const int k = static_cast<int>(x.size());
  int remaining = 0;
  for (int v : x) remaining += v;
  std::uint64_t rank = 0;
  for (int j = 0; j + 1 < k; ++j) {
    const int p = k - j - 1;
    rank += binom(remaining + p, p) - binom(remaining - x[j] + p, p);
    remaining -= x[j];
  }
  return rank;
}

// Advances x to the next composition (same total) in lexicographic order.
// Returns false after the last one, (n, 0, ..., 0).
inline bool next_composition(std::vector<int>& x) {
  const int k = static_cast<int>(x.size());
  if (k == 1) return false;
  const int tail = x[k - 1];
  if (tail > 0) {
    ++x[k - 2];
    x[k - 1] = tail - 1;
    return true;
  }
  int j = k - 2;
  while (j >= 0 && x[j] == 0) --j;
  if (j <= 0) return false;
  const int v = x[j];
  x[j] = 0;
  ++x[j - 1];
  x[k - 1] = v - 1;
  return true;
}

// Shared driver for the truncated normalization sums: walks population levels,
// maintaining log weights of every aggregate state of the current level over
// the active classes, and hands each finished level to `on_level`.
// on_level(level, level_states, state_log_weights, enumerate_fn) -> bool stop.
class LevelSweep {
 public:
  LevelSweep(const ClusterModel& model, const WorkloadSpec& wl)
      : model_(model), sigma_(wl.mean_size) {
    const int N = model.num_classes();
    for (int i = 0; i < N; ++i)
      if (wl.arrival_rates[i] > 0.0) {
        active_.push_back(i);
        log_arrival_.push_back(std::log(wl.arrival_rates[i] * sigma_));
      }
  }

  int num_active() const { return static_cast<int>(active_.size()); }
  const std::vector<int>& active() const { return active_; }

  std::uint64_t level_size(const BinomialTable& binom, int level) const {
    return composition_count(binom, level, num_active());
  }

  // Runs levels 1..max_level (level 0 is the empty state, log weight 0).
  // stop(level, curr) is consulted after each level.
  template <typename OnLevel>
  void run(const BinomialTable& binom, int max_level, OnLevel&& on_level) {
    const int k = num_active();
    std::vector<double> prev{0.0};  // level 0
    std::vector<double> curr;
    std::vector<int> x(k, 0), pred(k, 0);
    for (int n = 1; n <= max_level; ++n) {
      curr.assign(level_size(binom, n), kNegInf);
      std::fill(x.begin(), x.end(), 0);
      x[k - 1] = n;
      std::uint64_t idx = 0;
      do {
        // w(x) = sum_{i in A(x)} lambda_i*sigma * w(x - e_i) / mu(A(x))
        double acc = kNegInf;
        ClassMask mask = 0;
        for (int j = 0; j < k; ++j)
          if (x[j] > 0) mask |= ClassMask{1} << active_[j];
        pred.assign(x.begin(), x.end());
        for (int j = 0; j < k; ++j) {
          if (x[j] == 0) continue;
          --pred[j];
          const std::uint64_t r = composition_rank(binom, pred);
          ++pred[j];
          acc = log_add(acc, log_arrival_[j] + prev[r]);
        }
        curr[idx++] = acc - std::log(model_.rate_of_set(mask));
      } while (next_composition(x));

      if (on_level(n, std::cref(curr))) return;
      prev.swap(curr);
    }
  }

  // Re-enumerates the compositions of a level in the same order as `run`.
  template <typename F>
  void for_each_state(int level, F&& f) const {
    std::vector<int> x(num_active(), 0);
    x[num_active() - 1] = level;
    do {
      f(std::cref(x));
    } while (next_composition(x));
  }

 private:
  const ClusterModel& model_;
  double sigma_;
  std::vector<int> active_;
  std::vector<double> log_arrival_;
};

double log_sum(const std::vector<double>& v) {
  double mx = kNegInf;
  for (double e : v) mx = std::max(mx, e);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double e : v) s += std::exp(e - mx);
  return mx + std::log(s);
}

}  // namespace

MetricsReport performance_metrics(const ClusterModel& model, const WorkloadSpec& wl,
                                  const MetricsOptions& opts) {
  validate_workload(model, wl);
  const int N = model.num_classes();
  if (N > 64) throw std::invalid_argument("analysis operations need <= 64 classes");

  MetricsReport report;
  report.arrival_rates = wl.arrival_rates;
  report.mean_size = wl.mean_size;
  report.mean_jobs.assign(N, 0.0);
  report.service_rate.assign(N, kNaN);
  report.delay.assign(N, kNaN);

  LevelSweep sweep(model, wl);
  const int k = sweep.num_active();
  if (k == 0) return report;  // no traffic

  if (!opts.skip_stability_check && k <= 20) {
    StabilityReport st = check_stability(model, wl);
    if (!st.stable)
      throw std::runtime_error(
          "unstable workload: arrival rates saturate classes " +
          format_subset(st.violating_set) + "; the metric sums diverge");
  }

  // Hard level ceiling from the cumulative state budget:
  // sum_{n <= L} C(n+k-1, k-1) = C(L+k, k) <= max_states.
  const auto log_cumulative_states = [k](int level) {
    double s = 0.0;
    for (int j = 1; j <= k; ++j) s += std::log(double(level + j) / j);
    return s;
  };
  int hard_level = 1;
  while (hard_level < 1000000 &&
         log_cumulative_states(hard_level + 1) <= std::log(double(opts.max_states)))
    ++hard_level;
  BinomialTable binom(hard_level + k + 2, k);

  const std::vector<int>& active = sweep.active();
  double log_z = 0.0;                       // level 0 contributes weight 1
  std::vector<double> log_m(k, kNegInf);    // running sums of w(x) * x_i
  bool converged = false;

  sweep.run(binom, hard_level, [&](int level, const std::vector<double>& lw) {
    const double level_log_z = log_sum(lw);
    // First moments of this level; shift by the level max.
    double mx = kNegInf;
    for (double e : lw) mx = std::max(mx, e);
    std::vector<double> moment(k, 0.0);
    std::uint64_t idx = 0;
    sweep.for_each_state(level, [&](const std::vector<int>& x) {
      const double w = std::exp(lw[idx++] - mx);
      for (int j = 0; j < k; ++j) moment[j] += w * x[j];
    });

    const double new_log_z = log_add(log_z, level_log_z);
    double worst = std::exp(level_log_z - new_log_z);
    for (int j = 0; j < k; ++j) {
      const double level_log_m = mx + std::log(moment[j]);
      const double new_log_m = log_add(log_m[j], level_log_m);
      worst = std::max(worst, std::exp(level_log_m - new_log_m));
      log_m[j] = new_log_m;
    }
    log_z = new_log_z;
    report.truncation_level = level;
    report.truncation_error = worst;
    if (worst < opts.tolerance) {
      converged = true;
      return true;
    }
    return false;
  });

  if (!converged)
    throw std::runtime_error(
        "metric sums did not converge within the state budget (reached level " +
        std::to_string(report.truncation_level) + ")");

  report.log_normalization = log_z;
  report.normalization = std::exp(log_z);
  for (int j = 0; j < k; ++j) {
    const int i = active[j];
    const double mean_jobs = std::exp(log_m[j] - log_z);
    report.mean_jobs[i] = mean_jobs;
    report.service_rate[i] = wl.arrival_rates[i] * wl.mean_size / mean_jobs;
    report.delay[i] = wl.mean_size / report.service_rate[i];
  }
  return report;
}

std::vector<double> normalization_partial_sums(const ClusterModel& model,
                                               const WorkloadSpec& wl,
                                               int max_level) {
  validate_workload(model, wl);
  LevelSweep sweep(model, wl);
  if (sweep.num_active() == 0)
    return std::vector<double>(max_level + 1, 0.0);
  BinomialTable binom(max_level + sweep.num_active() + 2, sweep.num_active());

  std::vector<double> partial;
  partial.reserve(max_level + 1);
  partial.push_back(0.0);  // log sum through level 0
  sweep.run(binom, max_level, [&](int, const std::vector<double>& lw) {
    partial.push_back(log_add(partial.back(), log_sum(lw)));
    return false;
  });
  return partial;
}

TreeRates tree_closed_form(double mu1, double mu2, double mu3, double lambda1,
                           double lambda2) {
  for (double m : {mu1, mu2, mu3})
    if (!std::isfinite(m) || m < 0.0)
      throw std::invalid_argument("tree capacities must be finite and >= 0");
  const double mu = mu1 + mu2 + mu3;
  if (!(mu1 + mu3 > 0.0) || !(mu2 + mu3 > 0.0))
    throw std::invalid_argument("each class needs positive accessible capacity");
  if (!(lambda1 < mu1 + mu3) || !(lambda2 < mu2 + mu3) || !(lambda1 + lambda2 < mu))
    throw std::invalid_argument("arrival rates outside the stability region");

  const double rho1 = lambda1 / (mu1 + mu3);
  const double rho2 = lambda2 / (mu2 + mu3);
  const double rho = (lambda1 + lambda2) / mu;
  const double denom =
      mu - (mu1 + mu3) * rho1 - (mu2 + mu3) * rho2 + mu3 * rho1 * rho2;

  const double inv1 = 1.0 / (mu * (1.0 - rho)) +
                      (mu2 / (mu1 + mu3)) * ((1.0 - rho2) / (1.0 - rho1)) / denom;
  const double inv2 = 1.0 / (mu * (1.0 - rho)) +
                      (mu1 / (mu2 + mu3)) * ((1.0 - rho1) / (1.0 - rho2)) / denom;
  return {1.0 / inv1, 1.0 / inv2};
}

void write_metrics_csv(const MetricsReport& report, std::ostream& os) {
  os << "class,lambda,gamma,delta,mean_jobs\n";
  char buf[160];
  for (std::size_t i = 0; i < report.arrival_rates.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g\n", i + 1,
                  report.arrival_rates[i], report.service_rate[i],
                  report.delay[i], report.mean_jobs[i]);
    os << buf;
  }
}

}  // namespace clusterq
