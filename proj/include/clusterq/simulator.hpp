#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "clusterq/common.hpp"
#include "clusterq/distributions.hpp"
#include "clusterq/model.hpp"

namespace clusterq {

/// Queue-and-assignment mechanics of the interruption scheduler: a single
/// FCFS virtual queue where every idle server serves the first compatible
/// job. Jobs are opaque non-negative ids carrying their compatible server
/// set. Time, work, and timers live in the simulator on top of this.
class QueueAllocator {
 public:
  explicit QueueAllocator(int num_servers);

  /// Servers newly assigned to a job, in scan order.
  struct Claim {
    int job;
    std::vector<int> servers;
  };
  using Claims = std::vector<Claim>;

  /// Appends the job to the tail; it immediately claims every idle
  /// compatible server (it can only win servers if no compatible job is
  /// already queued). Returns the claim for the new job, if any.
  Claims arrive(int job, std::vector<int> servers);

  /// Removes the job, releases its servers, and rescans from its old
  /// position; returns the claims made during the rescan.
  Claims depart(int job);

  /// Releases every server processing the job and moves it to the tail; the
  /// rescan from its old position includes the tail, so the job may resume
  /// immediately. Returns the claims made during the rescan.
  Claims interrupt(int job);

  int num_servers() const { return static_cast<int>(serving_.size()); }
  int num_jobs() const { return static_cast<int>(queue_.size()); }
  /// Job served by a server, or -1 when idle.
  int serving(int server) const { return serving_.at(server); }
  int position_of(int job) const;
  const std::vector<int>& queue() const { return queue_; }
  const std::vector<int>& servers_of(int job) const;
  const std::vector<int>& claimed_by(int job) const;

  /// Assignment an empty-handed scan of the whole queue would produce;
  /// equals the incremental state at every event boundary.
  std::vector<int> full_rescan_assignment() const;

 private:
  struct Entry {
    std::vector<int> servers;
    std::vector<int> claimed;
    int pos = -1;  // -1 when not queued
  };
  const Entry& entry(int job) const;
  void scan_from(int pos, Claims& claims);
  void release(int job);
  void remove_from_queue(int pos);

  std::vector<int> serving_;   // server -> job id (-1 idle)
  std::vector<int> queue_;     // job ids, head first
  std::vector<Entry> entries_; // indexed by job id
};

/// Arrivals draw a fresh uniformly random server subset per job instead of a
/// fixed class; all jobs are reported under class 0.
struct RandomAssignmentSpec {
  int servers_per_job = 2;
  double total_rate = 1.0;
};

struct SimConfig {
  std::shared_ptr<const ClusterModel> model;
  std::vector<double> arrival_rates;  // per class; ignored under random assignment
  SizeDistribution size_dist;

  /// Mean interruptions per job, m = sigma/theta. 0 disables the timers
  /// (plain per-server FCFS). `theta` overrides m when set.
  double interruptions_per_job = 0.0;
  std::optional<double> theta;

  std::uint64_t warmup_events = 1000000;
  std::uint64_t measured_events = 1000000;
  std::uint64_t seed = 1;

  std::optional<RandomAssignmentSpec> random_assignment;

  /// Re-derive every server assignment from scratch after each event and
  /// compare with the incremental state; also check the instantaneous total
  /// rate against mu(A(c)). For tests; expensive.
  bool debug_checks = false;

  /// Accumulate time in each aggregate state with at most this many jobs
  /// (-1 disables tracking).
  int occupancy_cap = -1;

  /// One tab-separated line per applied event (see README for the format).
  std::ostream* trace = nullptr;

  double effective_theta() const;
};

struct ClassStats {
  std::uint64_t completions = 0;
  double mean_sojourn = kNaN;      // over jobs completed in the measured window
  double time_avg_jobs = 0.0;      // time-average number in system
  double completion_rate = 0.0;    // completions per unit time
};

struct RunStats {
  std::vector<ClassStats> per_class;
  double measured_time = 0.0;
  std::uint64_t events_applied = 0;       // warmup + measured
  std::uint64_t total_completions = 0;    // in the measured window
  double interruptions_per_completion = kNaN;
  double max_work_conservation_error = 0.0;  // max relative |served - size|
  std::uint64_t seed = 0;
  /// Fraction of measured time per aggregate state (when tracking enabled).
  std::map<Counts, double> occupancy;
};

RunStats simulate(const SimConfig& config);

struct ReplicateResult {
  int runs = 0;
  double mean_size = 1.0;
  // Per class, across runs (normal-approximation 95% intervals).
  std::vector<double> delay_mean, delay_ci_half;
  std::vector<double> gamma_mean, gamma_ci_half;  // gamma = sigma/delay per run
  std::vector<double> mean_jobs_mean;
  double interruptions_per_completion = kNaN;     // pooled
  std::vector<RunStats> run_stats;
};

/// Independent replications with derived per-run seeds, fanned out over up to
/// `max_workers` threads; `max_workers <= 0` uses the hardware concurrency.
ReplicateResult replicate(const SimConfig& config, int runs, int max_workers = 0);

}  // namespace clusterq
