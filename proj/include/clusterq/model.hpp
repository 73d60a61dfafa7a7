#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "clusterq/common.hpp"

namespace clusterq {

/// A cluster of servers with a class/server compatibility graph.
///
/// Server s has a fixed capacity (work units per time); class i may be
/// processed by any server in its compatible set. The total service rate of a
/// queue state depends only on the set of classes present:
///     mu(A) = sum of capacities over the union of the compatible sets of A.
///
/// Immutable after construction; safe for concurrent reads.
class ClusterModel {
 public:
  /// `class_servers` uses 0-based server indices; sets are deduplicated and
  /// sorted. Throws std::invalid_argument on non-positive/non-finite
  /// capacities, empty compatible sets, or out-of-range server indices.
  ClusterModel(std::vector<double> server_capacities,
               std::vector<std::vector<int>> class_servers);

  int num_servers() const { return static_cast<int>(capacities_.size()); }
  int num_classes() const { return static_cast<int>(class_servers_.size()); }

  double server_capacity(int s) const { return capacities_.at(s); }
  const std::vector<double>& server_capacities() const { return capacities_; }
  const std::vector<int>& servers_of(int cls) const {
    return class_servers_.at(cls);
  }
  const std::vector<std::vector<int>>& class_servers() const {
    return class_servers_;
  }

  double total_capacity() const { return total_capacity_; }

  /// Maximum service rate of class i: sum of capacities over its servers.
  double class_peak_rate(int cls) const { return peak_rate_.at(cls); }

  /// mu(A) for a class subset given as a bitmask. Requires <= 64 classes.
  /// O(1) when the subset cache is built (N <= 20 and S <= 64).
  double rate_of_set(ClassMask active) const;

  /// mu(A) for a class subset given as explicit indices. Works at any N.
  double rate_of_set(std::span<const int> active) const;

  ClassMask full_mask() const;
  bool has_rate_cache() const { return !rate_cache_.empty(); }

 private:
  double rate_of_mask_uncached(ClassMask active) const;

  std::vector<double> capacities_;
  std::vector<std::vector<int>> class_servers_;
  std::vector<double> peak_rate_;
  std::vector<std::uint64_t> class_server_mask_;  // only when S <= 64
  std::vector<double> rate_cache_;                // 2^N, only when small
  double total_capacity_ = 0.0;
};

/// Set of active classes A(x) of an aggregate state, as a bitmask.
ClassMask active_set(std::span<const int> counts);

/// Aggregate state |c| of a detailed state.
Counts counts_of(std::span<const int> seq, int num_classes);

/// Service rates by queue position: entry k is
/// mu(c_1..c_{k+1}) - mu(c_1..c_k), the rate of the job in position k.
/// Entries are >= 0 and sum to mu(A(c)); a job whose class already appears
/// earlier in the queue receives 0.
std::vector<double> per_position_rates(const ClusterModel& model,
                                       std::span<const int> state);

/// Total service rate of a detailed state, computed through the positional
/// decomposition (order-sensitive code path, used by the OI axiom checker).
double sequence_rate(const ClusterModel& model, std::span<const int> state);

// ---------------------------------------------------------------------------
// Order-independence axioms checker. Accepts an arbitrary rate function so
// that deliberately broken fixtures can be used to validate the checker.

using RateFn = std::function<double(std::span<const int>)>;

struct OiViolation {
  enum class Kind { empty_not_zero, zero_rate, monotonicity, order_dependence };
  Kind kind;
  ClassSeq state;
  ClassSeq other;  // extension or permutation, when applicable
  std::string describe() const;
};

struct OiReport {
  std::vector<OiViolation> violations;
  long states_checked = 0;
  bool ok() const { return violations.empty(); }
};

/// Checks mu(empty) = 0, mu(c) > 0 for c != empty, monotonicity under
/// single-class extension, and invariance under permutation (exhaustive for
/// states up to `max_permutation_length`).
OiReport check_oi_axioms(const RateFn& mu, int num_classes,
                         std::span<const ClassSeq> states,
                         int max_permutation_length = 7);

/// Same check against the model's own rate function (positional sum path).
OiReport check_oi_axioms(const ClusterModel& model,
                         std::span<const ClassSeq> states);

/// All detailed states of length <= max_len, in BFS order. Counted before
/// building; throws if the count would exceed `max_states`.
std::vector<ClassSeq> enumerate_states(int num_classes, int max_len,
                                       std::size_t max_states = 2000000);

}  // namespace clusterq
