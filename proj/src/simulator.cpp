#include "clusterq/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <thread>

#include "clusterq/random.hpp"

namespace clusterq {

// ---------------------------------------------------------------------------
// QueueAllocator

QueueAllocator::QueueAllocator(int num_servers) : serving_(num_servers, -1) {
  if (num_servers < 1) throw std::invalid_argument("need at least one server");
}

const QueueAllocator::Entry& QueueAllocator::entry(int job) const {
  if (job < 0 || job >= static_cast<int>(entries_.size()) ||
      entries_[job].pos < 0)
    throw std::invalid_argument("job is not in the queue");
  return entries_[job];
}

int QueueAllocator::position_of(int job) const { return entry(job).pos; }

const std::vector<int>& QueueAllocator::servers_of(int job) const {
  return entry(job).servers;
}

const std::vector<int>& QueueAllocator::claimed_by(int job) const {
  return entry(job).claimed;
}

QueueAllocator::Claims QueueAllocator::arrive(int job, std::vector<int> servers) {
  if (job < 0) throw std::invalid_argument("job ids must be non-negative");
  if (job >= static_cast<int>(entries_.size())) entries_.resize(job + 1);
  Entry& e = entries_[job];
  if (e.pos >= 0) throw std::invalid_argument("job is already queued");
  for (int s : servers)
    if (s < 0 || s >= num_servers())
      throw std::invalid_argument("server index out of range");
  e.servers = std::move(servers);
  e.claimed.clear();
  e.pos = static_cast<int>(queue_.size());
  queue_.push_back(job);

  Claims claims;
  Claim claim{job, {}};
  for (int s : e.servers) {
    if (serving_[s] == -1) {
      serving_[s] = job;
      e.claimed.push_back(s);
      claim.servers.push_back(s);
    }
  }
  if (!claim.servers.empty()) claims.push_back(std::move(claim));
  return claims;
}

void QueueAllocator::release(int job) {
  Entry& e = entries_[job];
  for (int s : e.claimed) serving_[s] = -1;
  e.claimed.clear();
}

void QueueAllocator::remove_from_queue(int pos) {
  queue_.erase(queue_.begin() + pos);
  for (std::size_t p = pos; p < queue_.size(); ++p)
    entries_[queue_[p]].pos = static_cast<int>(p);
}

void QueueAllocator::scan_from(int pos, Claims& claims) {
  for (std::size_t p = pos; p < queue_.size(); ++p) {
    const int job = queue_[p];
    Entry& e = entries_[job];
    Claim claim{job, {}};
    for (int s : e.servers) {
      if (serving_[s] == -1) {
        serving_[s] = job;
        e.claimed.push_back(s);
        claim.servers.push_back(s);
      }
    }
    if (!claim.servers.empty()) claims.push_back(std::move(claim));
  }
}

QueueAllocator::Claims QueueAllocator::depart(int job) {
  const int pos = entry(job).pos;
  release(job);
  remove_from_queue(pos);
  entries_[job].pos = -1;
  Claims claims;
  scan_from(pos, claims);
  return claims;
}

QueueAllocator::Claims QueueAllocator::interrupt(int job) {
  const int pos = entry(job).pos;
  release(job);
  remove_from_queue(pos);
  Entry& e = entries_[job];
  e.pos = static_cast<int>(queue_.size());
  queue_.push_back(job);
  Claims claims;
  scan_from(pos, claims);
  return claims;
}

std::vector<int> QueueAllocator::full_rescan_assignment() const {
  std::vector<int> fresh(serving_.size(), -1);
  for (int job : queue_)
    for (int s : entries_[job].servers)
      if (fresh[s] == -1) fresh[s] = job;
  return fresh;
}

// ---------------------------------------------------------------------------
// Event-driven simulation

double SimConfig::effective_theta() const {
  if (theta) {
    if (!(*theta > 0.0)) throw std::invalid_argument("theta must be positive");
    return *theta;
  }
  if (interruptions_per_job < 0.0)
    throw std::invalid_argument("interruptions per job must be >= 0");
  if (interruptions_per_job == 0.0)
    return std::numeric_limits<double>::infinity();
  return size_dist.mean() / interruptions_per_job;
}

namespace {

enum class EventKind : std::uint8_t { arrival, departure, timer };

struct Event {
  double time;
  std::uint64_t seq;  // deterministic tie-break for equal timestamps
  EventKind kind;
  int target;  // arrival: class stream; departure: job slot; timer: server
  std::uint64_t version;
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    return a.seq > b.seq;
  }
};

struct Job {
  int cls = 0;
  double size = 0.0;
  double remaining = 0.0;
  double served = 0.0;
  double arrival_time = 0.0;
  double last_update = 0.0;
  double rate = 0.0;
  int interruptions = 0;
  std::uint64_t version = 0;  // invalidates pending departure events
  bool alive = false;
};

class Simulation {
 public:
  explicit Simulation(const SimConfig& cfg)
      : cfg_(cfg),
        model_(*cfg.model),
        theta_(cfg.effective_theta()),
        rng_(cfg.seed),
        alloc_(model_.num_servers()),
        timer_version_(model_.num_servers(), 0) {
    if (cfg_.random_assignment) {
      const auto& ra = *cfg_.random_assignment;
      if (ra.servers_per_job < 1 || ra.servers_per_job > model_.num_servers())
        throw std::invalid_argument("servers per job out of range");
      if (!(ra.total_rate > 0.0))
        throw std::invalid_argument("total arrival rate must be positive");
      stream_rates_ = {ra.total_rate};
      num_stat_classes_ = 1;
      subset_pool_.resize(model_.num_servers());
      std::iota(subset_pool_.begin(), subset_pool_.end(), 0);
    } else {
      if (static_cast<int>(cfg_.arrival_rates.size()) != model_.num_classes())
        throw std::invalid_argument("arrival-rate dimension does not match the model");
      stream_rates_ = cfg_.arrival_rates;
      num_stat_classes_ = model_.num_classes();
      bool any = false;
      for (double l : stream_rates_) {
        if (l < 0.0 || !std::isfinite(l))
          throw std::invalid_argument("arrival rates must be finite and >= 0");
        any = any || l > 0.0;
      }
      if (!any) throw std::invalid_argument("no class has a positive arrival rate");
    }
    counts_.assign(num_stat_classes_, 0);
    class_integral_.assign(num_stat_classes_, 0.0);
    sojourn_sum_.assign(num_stat_classes_, 0.0);
    completions_.assign(num_stat_classes_, 0);
  }

  RunStats run() {
    if (cfg_.measured_events == 0)
      throw std::invalid_argument("measured_events must be positive");
    const std::uint64_t target = cfg_.warmup_events + cfg_.measured_events;
    for (std::size_t i = 0; i < stream_rates_.size(); ++i)
      if (stream_rates_[i] > 0.0) schedule_arrival(static_cast<int>(i), 0.0);

    std::uint64_t applied = 0;
    while (applied < target) {
      const Event ev = pop_valid();
      integrate_to(ev.time);
      apply(ev);
      now_ = ev.time;
      ++applied;
      if (cfg_.debug_checks) verify_state();
      if (applied == cfg_.warmup_events) begin_measurement();
    }
    return collect();
  }

 private:
  // -- event plumbing --------------------------------------------------------

  void push(double t, EventKind kind, int target, std::uint64_t version) {
    heap_.push(Event{t, next_seq_++, kind, target, version});
  }

  Event pop_valid() {
    while (!heap_.empty()) {
      Event ev = heap_.top();
      heap_.pop();
      switch (ev.kind) {
        case EventKind::arrival:
          return ev;
        case EventKind::departure: {
          const Job& j = jobs_[ev.target];
          if (j.alive && j.version == ev.version) return ev;
          break;
        }
        case EventKind::timer: {
          if (timer_version_[ev.target] == ev.version &&
              alloc_.serving(ev.target) != -1)
            return ev;
          break;
        }
      }
    }
    throw std::logic_error("event heap exhausted");
  }

  bool timers_off() const { return !std::isfinite(theta_); }

  void schedule_arrival(int stream, double now) {
    push(now + rng_.exponential(1.0 / stream_rates_[stream]),
         EventKind::arrival, stream, 0);
  }

  void schedule_departure(int slot, double now) {
    Job& j = jobs_[slot];
    ++j.version;
    if (j.rate > 0.0)
      push(now + j.remaining / j.rate, EventKind::departure, slot, j.version);
  }

  void start_timer(int server, double now) {
    ++timer_version_[server];
    if (timers_off()) return;
    const double mean = theta_ / model_.server_capacity(server);
    push(now + rng_.exponential(mean), EventKind::timer, server,
         timer_version_[server]);
  }

  // -- job/work accounting ----------------------------------------------------

  void advance(Job& j, double now) {
    if (j.rate > 0.0) {
      const double work = j.rate * (now - j.last_update);
      j.remaining -= work;
      j.served += work;
    }
    j.last_update = now;
  }

  int allocate_slot() {
    if (!free_slots_.empty()) {
      const int slot = free_slots_.back();
      free_slots_.pop_back();
      return slot;
    }
    jobs_.emplace_back();
    return static_cast<int>(jobs_.size()) - 1;
  }

  /// Timers for newly claimed servers (a server transitioning to serving
  /// always draws afresh), then the rate bump and a new departure estimate.
  void apply_claims(const QueueAllocator::Claims& claims, double now) {
    for (const auto& claim : claims) {
      Job& j = jobs_[claim.job];
      double gained = 0.0;
      for (int s : claim.servers) {
        start_timer(s, now);
        gained += model_.server_capacity(s);
      }
      advance(j, now);
      j.rate += gained;
      schedule_departure(claim.job, now);
    }
  }

  void invalidate_timers(const std::vector<int>& servers) {
    for (int s : servers) ++timer_version_[s];
  }

  // -- event handlers -----------------------------------------------------------

  void apply(const Event& ev) {
    switch (ev.kind) {
      case EventKind::arrival: on_arrival(ev); break;
      case EventKind::departure: on_departure(ev); break;
      case EventKind::timer: on_timer(ev); break;
    }
  }

  void on_arrival(const Event& ev) {
    const int slot = allocate_slot();
    Job& j = jobs_[slot];
    j.alive = true;
    j.interruptions = 0;
    j.served = 0.0;
    j.rate = 0.0;
    j.arrival_time = ev.time;
    j.last_update = ev.time;
    j.size = j.remaining = cfg_.size_dist.sample(rng_);
    std::vector<int> servers;
    if (cfg_.random_assignment) {
      j.cls = 0;
      servers = sample_server_subset(cfg_.random_assignment->servers_per_job);
    } else {
      j.cls = ev.target;
      servers = model_.servers_of(ev.target);
    }
    ++j.version;

    ++counts_[j.cls];
    apply_claims(alloc_.arrive(slot, std::move(servers)), ev.time);
    schedule_arrival(ev.target, ev.time);
    trace_event(ev.time, "arrival", slot);
  }

  void on_departure(const Event& ev) {
    const int slot = ev.target;
    Job& j = jobs_[slot];
    advance(j, ev.time);
    // The event marks the work hitting zero; the residual after the slice
    // updates is timestamp round-off, not service.
    j.served += j.remaining;
    j.remaining = 0.0;

    if (measuring_) {
      const double err = std::abs(j.served - j.size) / j.size;
      work_error_ = std::max(work_error_, err);
      ++completions_[j.cls];
      sojourn_sum_[j.cls] += ev.time - j.arrival_time;
      interruption_sum_ += j.interruptions;
    }

    invalidate_timers(alloc_.claimed_by(slot));
    const auto claims = alloc_.depart(slot);
    --counts_[j.cls];
    j.alive = false;
    ++j.version;
    free_slots_.push_back(slot);
    apply_claims(claims, ev.time);
    trace_event(ev.time, "departure", slot);
  }

  void on_timer(const Event& ev) {
    const int slot = alloc_.serving(ev.target);
    Job& j = jobs_[slot];
    advance(j, ev.time);
    ++j.interruptions;
    j.rate = 0.0;
    ++j.version;  // cancels the pending departure

    // The interrupted job releases every server processing it and re-enters
    // at the tail; the rescan covers the tail, so it may resume at once.
    invalidate_timers(alloc_.claimed_by(slot));
    apply_claims(alloc_.interrupt(slot), ev.time);
    trace_event(ev.time, "interrupt", slot);
  }

  std::vector<int> sample_server_subset(int d) {
    const int S = static_cast<int>(subset_pool_.size());
    for (int k = 0; k < d; ++k)
      std::swap(subset_pool_[k], subset_pool_[k + rng_.uniform_int(S - k)]);
    std::vector<int> subset(subset_pool_.begin(), subset_pool_.begin() + d);
    std::sort(subset.begin(), subset.end());
    return subset;
  }

  // -- measurement ---------------------------------------------------------------

  void integrate_to(double t) {
    if (!measuring_) return;
    const double dt = t - last_integrated_;
    if (dt > 0.0) {
      for (int i = 0; i < num_stat_classes_; ++i)
        class_integral_[i] += dt * counts_[i];
      if (cfg_.occupancy_cap >= 0 &&
          std::accumulate(counts_.begin(), counts_.end(), 0) <= cfg_.occupancy_cap)
        occupancy_[counts_] += dt;
    }
    last_integrated_ = t;
  }

  void begin_measurement() {
    measuring_ = true;
    measure_start_ = now_;
    last_integrated_ = now_;
  }

  RunStats collect() const {
    RunStats stats;
    stats.seed = cfg_.seed;
    stats.events_applied = cfg_.warmup_events + cfg_.measured_events;
    stats.measured_time = last_integrated_ - measure_start_;
    stats.per_class.resize(num_stat_classes_);
    std::uint64_t total = 0;
    for (int i = 0; i < num_stat_classes_; ++i) {
      ClassStats& cs = stats.per_class[i];
      cs.completions = completions_[i];
      total += completions_[i];
      if (completions_[i] > 0)
        cs.mean_sojourn = sojourn_sum_[i] / double(completions_[i]);
      if (stats.measured_time > 0.0) {
        cs.time_avg_jobs = class_integral_[i] / stats.measured_time;
        cs.completion_rate = double(completions_[i]) / stats.measured_time;
      }
    }
    stats.total_completions = total;
    if (total > 0)
      stats.interruptions_per_completion = double(interruption_sum_) / double(total);
    stats.max_work_conservation_error = work_error_;
    if (cfg_.occupancy_cap >= 0 && stats.measured_time > 0.0) {
      for (const auto& [state, t] : occupancy_)
        stats.occupancy[state] = t / stats.measured_time;
    }
    return stats;
  }

  void trace_event(double t, const char* kind, int slot) {
    if (!cfg_.trace) return;
    char buf[96];
    std::snprintf(buf, sizeof(buf), "%.9g\t%s\t%d\t%d\t", t, kind, slot,
                  alloc_.num_jobs());
    *cfg_.trace << buf;
    for (int i = 0; i < num_stat_classes_; ++i)
      *cfg_.trace << counts_[i] << (i + 1 < num_stat_classes_ ? " " : "");
    *cfg_.trace << '\n';
  }

  // -- debug invariants ------------------------------------------------------------

  void verify_state() const {
    const auto fresh = alloc_.full_rescan_assignment();
    for (int s = 0; s < model_.num_servers(); ++s)
      if (fresh[s] != alloc_.serving(s))
        throw std::logic_error("server assignments diverge from a full rescan");

    double pooled = 0.0;
    for (int s = 0; s < model_.num_servers(); ++s)
      if (fresh[s] != -1) pooled += model_.server_capacity(s);
    double sum_rates = 0.0;
    for (int slot : alloc_.queue()) sum_rates += jobs_[slot].rate;
    if (std::abs(sum_rates - pooled) > 1e-9 * std::max(1.0, pooled))
      throw std::logic_error("job rates do not sum to the pooled service rate");

    if (!cfg_.random_assignment) {
      ClassSeq present;
      for (int slot : alloc_.queue()) present.push_back(jobs_[slot].cls);
      const double mu = model_.rate_of_set(std::span<const int>(present));
      if (std::abs(sum_rates - mu) > 1e-9 * std::max(1.0, mu))
        throw std::logic_error("total service rate differs from mu(A(c))");
    }
  }

  const SimConfig& cfg_;
  const ClusterModel& model_;
  double theta_;
  Rng rng_;

  std::priority_queue<Event, std::vector<Event>, EventAfter> heap_;
  std::uint64_t next_seq_ = 0;

  std::vector<Job> jobs_;
  std::vector<int> free_slots_;
  QueueAllocator alloc_;
  std::vector<std::uint64_t> timer_version_;
  std::vector<double> stream_rates_;
  std::vector<int> subset_pool_;
  int num_stat_classes_ = 0;

  double now_ = 0.0;
  bool measuring_ = false;
  double measure_start_ = 0.0;
  double last_integrated_ = 0.0;
  Counts counts_;
  std::vector<double> class_integral_;
  std::vector<double> sojourn_sum_;
  std::vector<std::uint64_t> completions_;
  std::uint64_t interruption_sum_ = 0;
  double work_error_ = 0.0;
  std::map<Counts, double> occupancy_;
};

double ci_half_width(const std::vector<double>& samples, double mean) {
  const std::size_t n = samples.size();
  if (n < 2) return kNaN;
  double ss = 0.0;
  for (double v : samples) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / double(n - 1));
  return 1.96 * sd / std::sqrt(double(n));
}

}  // namespace

RunStats simulate(const SimConfig& config) {
  if (!config.model) throw std::invalid_argument("simulation needs a model");
  return Simulation(config).run();
}

ReplicateResult replicate(const SimConfig& config, int runs, int max_workers) {
  if (runs < 1) throw std::invalid_argument("need at least one run");
  if (config.trace && runs > 1)
    throw std::invalid_argument("tracing is limited to single runs");

  ReplicateResult result;
  result.runs = runs;
  result.mean_size = config.size_dist.mean();
  result.run_stats.resize(runs);

  int workers = max_workers > 0
                    ? max_workers
                    : static_cast<int>(std::thread::hardware_concurrency());
  workers = std::max(1, std::min(workers, runs));

  auto worker = [&](int w) {
    for (int r = w; r < runs; r += workers) {
      SimConfig cfg = config;
      cfg.seed = splitmix64(config.seed + 0x9e3779b97f4a7c15ull * std::uint64_t(r + 1));
      result.run_stats[r] = simulate(cfg);
    }
  };
  if (workers == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker, w);
    for (auto& t : pool) t.join();
  }

  const int classes = static_cast<int>(result.run_stats.front().per_class.size());
  result.delay_mean.assign(classes, kNaN);
  result.delay_ci_half.assign(classes, kNaN);
  result.gamma_mean.assign(classes, kNaN);
  result.gamma_ci_half.assign(classes, kNaN);
  result.mean_jobs_mean.assign(classes, 0.0);

  const double sigma = result.mean_size;
  for (int i = 0; i < classes; ++i) {
    std::vector<double> delays, gammas;
    double jobs_sum = 0.0;
    for (const RunStats& rs : result.run_stats) {
      const double d = rs.per_class[i].mean_sojourn;
      if (std::isfinite(d)) {
        delays.push_back(d);
        gammas.push_back(sigma / d);
      }
      jobs_sum += rs.per_class[i].time_avg_jobs;
    }
    result.mean_jobs_mean[i] = jobs_sum / double(runs);
    if (delays.empty()) continue;
    const double dm =
        std::accumulate(delays.begin(), delays.end(), 0.0) / double(delays.size());
    const double gm =
        std::accumulate(gammas.begin(), gammas.end(), 0.0) / double(gammas.size());
    result.delay_mean[i] = dm;
    result.gamma_mean[i] = gm;
    result.delay_ci_half[i] = ci_half_width(delays, dm);
    result.gamma_ci_half[i] = ci_half_width(gammas, gm);
  }

  double int_sum = 0.0;
  std::uint64_t comp_sum = 0;
  for (const RunStats& rs : result.run_stats) {
    if (rs.total_completions > 0) {
      int_sum += rs.interruptions_per_completion * double(rs.total_completions);
      comp_sum += rs.total_completions;
    }
  }
  if (comp_sum > 0)
    result.interruptions_per_completion = int_sum / double(comp_sum);
  return result;
}

}  // namespace clusterq
