#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_map>
#include <vector>

#include "clusterq/common.hpp"
#include "clusterq/model.hpp"

namespace clusterq {

/// Per-class Poisson arrival rates (jobs per time) and mean job size
/// (work units per job). Effective per-class service rates seen by the
/// analysis are mu(A)/mean_size.
struct WorkloadSpec {
  std::vector<double> arrival_rates;
  double mean_size = 1.0;
};

void validate_workload(const ClusterModel& model, const WorkloadSpec& wl);

// ---------------------------------------------------------------------------
// Balance function Phi (log domain), memoized per model.
//
// Phi(0) = 1 and Phi(x) = (1/mu(A(x))) * sum_{i in A(x)} Phi(x - e_i),
// taken with the model's raw rates; rescaling the rates by a mean job size
// multiplies Phi(x) by mean_size^|x| and is applied by the callers that
// need it.
//
// Lookups mutate the memo: confine one table to one worker, or shard by x.

class BalanceTable {
 public:
  explicit BalanceTable(const ClusterModel& model) : model_(&model) {}

  /// log Phi(x), memoizing every intermediate state.
  double log_phi(std::span<const int> x);

  const ClusterModel& model() const { return *model_; }
  std::size_t memo_size() const { return memo_.size(); }

 private:
  const ClusterModel* model_;
  std::unordered_map<Counts, double, CountsHash> memo_;
};

// ---------------------------------------------------------------------------
// Stationary weights (relative to the empty state, log domain).

/// log of pi(c)/pi(empty) = prod_k lambda_{c_k} / nu(A(c_1..c_k)), with
/// nu = mu/mean_size. Throws if a class with zero arrival rate appears in c.
double detailed_log_weight(const ClusterModel& model, const WorkloadSpec& wl,
                           std::span<const int> seq);

/// log of pibar(x)/pibar(0) = log Phi_nu(x) + sum_i x_i log lambda_i.
double aggregate_log_weight(const ClusterModel& model, const WorkloadSpec& wl,
                            BalanceTable& table, std::span<const int> x);

// ---------------------------------------------------------------------------
// Stability (subset enumeration over classes with positive arrival rate).

struct StabilityReport {
  bool stable = false;
  /// Classes of a maximally violating subset (empty when stable).
  std::vector<int> violating_set;
  /// Witness rates: eta_i > lambda_i with sum_{i in A} eta_i < nu(A) for every
  /// non-empty A of active classes; zero entries for classes with lambda_i = 0.
  std::vector<double> eta;
  /// min over non-empty subsets A of nu(A) - lambda(A).
  double worst_slack = 0.0;
};

/// Exhaustive check of the stability condition over all non-empty subsets of
/// classes with lambda_i > 0. Refuses more than 20 active classes.
StabilityReport check_stability(const ClusterModel& model, const WorkloadSpec& wl);

struct BoundCheckReport {
  bool holds = false;
  /// max over checked x of log Phi_nu(x) - log Psi(x), Psi(x) = prod eta_i^-x_i.
  double worst_log_ratio = kNegInf;
  Counts worst_state;
  std::size_t states_checked = 0;
};

/// Verifies Phi(x) <= prod_i eta_i^{-x_i} for all x over the active classes
/// with sum x_i <= x_max. Accepts arbitrary eta so that invalid witnesses can
/// be shown to fail.
BoundCheckReport comparison_bound_check(const ClusterModel& model,
                                        const WorkloadSpec& wl,
                                        std::span<const double> eta, int x_max);

// ---------------------------------------------------------------------------
// Balanced-fairness rates.

/// phi_i(x) = Phi(x - e_i)/Phi(x) when x_i > 0, else 0 (model's raw rate units).
std::vector<double> bf_rates(BalanceTable& table, std::span<const int> x);

/// Brute-force average per-class service rates: enumerates every ordering c
/// with |c| = x, weights the rate of the first class-i job by pi(c), and
/// normalizes. Must match bf_rates; this is the executable equivalence of the
/// aggregate process with a Whittle network. Throws when the number of
/// orderings exceeds `max_orderings`.
std::vector<double> avg_rates_oracle(const ClusterModel& model,
                                     std::span<const double> arrival_rates,
                                     std::span<const int> x,
                                     std::uint64_t max_orderings = 100000);

// ---------------------------------------------------------------------------
// Performance metrics by truncated state-space summation.

struct MetricsReport {
  std::vector<double> arrival_rates;
  double mean_size = 1.0;
  std::vector<double> mean_jobs;      // E[x_i]
  std::vector<double> service_rate;   // gamma_i (NaN for classes with lambda=0)
  std::vector<double> delay;          // delta_i = mean_size/gamma_i (NaN likewise)
  double log_normalization = 0.0;     // log sum_x Phi_nu(x) prod lambda^x
  double normalization = 1.0;
  int truncation_level = 0;           // last population level summed
  double truncation_error = 0.0;      // worst relative increment of that level
};

struct MetricsOptions {
  double tolerance = 1e-10;    // stop when every running sum moves less than this
  std::size_t max_states = 40000000;  // cumulative state budget (hard ceiling)
  bool skip_stability_check = false;
};

/// Level-by-level summation of the aggregate stationary measure, stopping when
/// the last level's relative contribution to the normalization and to every
/// tracked first moment falls below the tolerance. Throws on unstable
/// workloads and when the budget is exhausted before convergence.
MetricsReport performance_metrics(const ClusterModel& model, const WorkloadSpec& wl,
                                  const MetricsOptions& opts = {});

/// Cumulative log partial sums of the normalization series, by population
/// level 0..max_level, with no convergence stopping (divergence diagnostics).
std::vector<double> normalization_partial_sums(const ClusterModel& model,
                                               const WorkloadSpec& wl,
                                               int max_level);

// ---------------------------------------------------------------------------
// Closed form for two classes over a dedicated+dedicated+shared server layout.

struct TreeRates {
  double gamma1;
  double gamma2;
};

/// Mean balanced-fairness service rates for the three-server tree layout:
/// server 1 dedicated to class 1 (rate mu1), server 2 to class 2 (mu2),
/// server 3 shared (mu3). Any two-class model reduces to this layout.
/// Throws when the arrival rates are outside the stability region.
TreeRates tree_closed_form(double mu1, double mu2, double mu3, double lambda1,
                           double lambda2);

// ---------------------------------------------------------------------------
// Serialization.

void write_metrics_csv(const MetricsReport& report, std::ostream& os);

}  // namespace clusterq
