#pragma once

#include <cstddef>
#include <unordered_map>
#include <vector>

#include "clusterq/analysis.hpp"
#include "clusterq/common.hpp"
#include "clusterq/model.hpp"

namespace clusterq {

/// Stationary distribution of the truncated detailed-state Markov chain.
struct CtmcSolution {
  std::vector<ClassSeq> states;       // BFS order by population
  std::vector<double> probabilities;  // sums to 1 over the truncated space
  int truncation_level = 0;
  long iterations = 0;
  double residual = 0.0;  // max |pi Q| scaled by the uniformization rate

  std::size_t size() const { return states.size(); }
  /// Index of a detailed state; throws if outside the truncated space.
  std::size_t index_of(const ClassSeq& state) const;

  std::unordered_map<ClassSeq, std::size_t, CountsHash> index;
};

/// Independent validation chain for the stationary measure: builds the CTMC on
/// detailed states with at most `max_jobs` jobs (arrivals blocked at the
/// boundary), transitions given by Poisson arrivals appending at the tail and
/// per-position service completions, then solves global balance by uniformized
/// power iteration. Knows nothing about the product form.
CtmcSolution ctmc_oracle(const ClusterModel& model, const WorkloadSpec& wl,
                         int max_jobs, std::size_t max_states = 20000);

}  // namespace clusterq
