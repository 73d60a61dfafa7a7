#include "clusterq/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace clusterq {

namespace {
constexpr int kRateCacheMaxClasses = 20;
}

ClusterModel::ClusterModel(std::vector<double> server_capacities,
                           std::vector<std::vector<int>> class_servers)
    : capacities_(std::move(server_capacities)),
      class_servers_(std::move(class_servers)) {
  if (capacities_.empty())
    throw std::invalid_argument("model needs at least one server");
  for (double c : capacities_) {
    if (!std::isfinite(c) || c <= 0.0)
      throw std::invalid_argument("server capacities must be positive and finite");
  }
  if (class_servers_.empty())
    throw std::invalid_argument("model needs at least one job class");

  const int S = num_servers();
  for (auto& servers : class_servers_) {
    if (servers.empty())
      throw std::invalid_argument("every class needs a non-empty server set");
    std::sort(servers.begin(), servers.end());
    servers.erase(std::unique(servers.begin(), servers.end()), servers.end());
    if (servers.front() < 0 || servers.back() >= S)
      throw std::invalid_argument("class server index out of range");
  }

  total_capacity_ = std::accumulate(capacities_.begin(), capacities_.end(), 0.0);

  peak_rate_.reserve(class_servers_.size());
  for (const auto& servers : class_servers_) {
    double r = 0.0;
    for (int s : servers) r += capacities_[s];
    peak_rate_.push_back(r);
  }

  if (S <= 64) {
    class_server_mask_.reserve(class_servers_.size());
    for (const auto& servers : class_servers_) {
      std::uint64_t m = 0;
      for (int s : servers) m |= std::uint64_t{1} << s;
      class_server_mask_.push_back(m);
    }
  }

  // Subset-indexed mu(A) cache; this sits in the innermost loop of the
  // balance-function recursion and of the stability check.
  if (num_classes() <= kRateCacheMaxClasses && S <= 64) {
    const std::size_t size = std::size_t{1} << num_classes();
    std::vector<std::uint64_t> unions(size, 0);
    rate_cache_.assign(size, 0.0);
    for (std::size_t mask = 1; mask < size; ++mask) {
      const std::size_t low = mask & (mask - 1);
      const int cls = std::countr_zero(mask);
      const std::uint64_t u = unions[low] | class_server_mask_[cls];
      unions[mask] = u;
      double rate = rate_cache_[low];
      std::uint64_t added = u & ~unions[low];
      while (added) {
        rate += capacities_[std::countr_zero(added)];
        added &= added - 1;
      }
      rate_cache_[mask] = rate;
    }
  }
}

double ClusterModel::rate_of_mask_uncached(ClassMask active) const {
  if (!class_server_mask_.empty()) {
    std::uint64_t servers = 0;
    ClassMask m = active;
    while (m) {
      servers |= class_server_mask_[std::countr_zero(m)];
      m &= m - 1;
    }
    double rate = 0.0;
    while (servers) {
      rate += capacities_[std::countr_zero(servers)];
      servers &= servers - 1;
    }
    return rate;
  }
  std::vector<char> seen(capacities_.size(), 0);
  double rate = 0.0;
  ClassMask m = active;
  while (m) {
    for (int s : class_servers_[std::countr_zero(m)]) {
      if (!seen[s]) {
        seen[s] = 1;
        rate += capacities_[s];
      }
    }
    m &= m - 1;
  }
  return rate;
}

double ClusterModel::rate_of_set(ClassMask active) const {
  const int N = num_classes();
  if (N > 64) throw std::invalid_argument("bitmask rate queries need <= 64 classes");
  if (N < 64 && (active >> N) != 0)
    throw std::invalid_argument("class subset mask out of range");
  if (!rate_cache_.empty()) return rate_cache_[active];
  return rate_of_mask_uncached(active);
}

double ClusterModel::rate_of_set(std::span<const int> active) const {
  const int N = num_classes();
  if (N <= 64) {
    ClassMask m = 0;
    for (int cls : active) {
      if (cls < 0 || cls >= N) throw std::invalid_argument("class index out of range");
      m |= ClassMask{1} << cls;
    }
    return rate_of_set(m);
  }
  std::vector<char> seen(capacities_.size(), 0);
  std::vector<char> done(N, 0);
  double rate = 0.0;
  for (int cls : active) {
    if (cls < 0 || cls >= N) throw std::invalid_argument("class index out of range");
    if (done[cls]) continue;
    done[cls] = 1;
    for (int s : class_servers_[cls]) {
      if (!seen[s]) {
        seen[s] = 1;
        rate += capacities_[s];
      }
    }
  }
  return rate;
}

ClassMask ClusterModel::full_mask() const {
  const int N = num_classes();
  if (N > 64) throw std::invalid_argument("bitmask rate queries need <= 64 classes");
  return N == 64 ? ~ClassMask{0} : (ClassMask{1} << N) - 1;
}

ClassMask active_set(std::span<const int> counts) {
  if (counts.size() > 64)
    throw std::invalid_argument("active_set needs <= 64 classes");
  ClassMask m = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] < 0) throw std::invalid_argument("negative job count");
    if (counts[i] > 0) m |= ClassMask{1} << i;
  }
  return m;
}

Counts counts_of(std::span<const int> seq, int num_classes) {
  Counts x(num_classes, 0);
  for (int cls : seq) {
    if (cls < 0 || cls >= num_classes)
      throw std::invalid_argument("class index out of range");
    ++x[cls];
  }
  return x;
}

std::vector<double> per_position_rates(const ClusterModel& model,
                                       std::span<const int> state) {
  const int N = model.num_classes();
  std::vector<double> rates;
  rates.reserve(state.size());
  std::vector<char> seen_server(model.num_servers(), 0);
  std::vector<char> seen_class(N, 0);
  for (int cls : state) {
    if (cls < 0 || cls >= N) throw std::invalid_argument("class index out of range");
    if (seen_class[cls]) {
      rates.push_back(0.0);
      continue;
    }
    seen_class[cls] = 1;
    double r = 0.0;
    for (int s : model.servers_of(cls)) {
      if (!seen_server[s]) {
        seen_server[s] = 1;
        r += model.server_capacity(s);
      }
    }
    rates.push_back(r);
  }
  return rates;
}

double sequence_rate(const ClusterModel& model, std::span<const int> state) {
  auto rates = per_position_rates(model, state);
  return std::accumulate(rates.begin(), rates.end(), 0.0);
}

std::string OiViolation::describe() const {
  auto seq_str = [](const ClassSeq& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ')';
    return os.str();
  };
  std::ostringstream os;
  switch (kind) {
    case Kind::empty_not_zero:
      os << "mu(empty) != 0";
      break;
    case Kind::zero_rate:
      os << "mu" << seq_str(state) << " <= 0 for a non-empty state";
      break;
    case Kind::monotonicity:
      os << "mu" << seq_str(state) << " > mu" << seq_str(other);
      break;
    case Kind::order_dependence:
      os << "mu" << seq_str(state) << " != mu" << seq_str(other);
      break;
  }
  return os.str();
}

OiReport check_oi_axioms(const RateFn& mu, int num_classes,
                         std::span<const ClassSeq> states,
                         int max_permutation_length) {
  constexpr double kRelTol = 1e-12;
  OiReport report;
  const ClassSeq empty;
  if (std::abs(mu(empty)) > 0.0)
    report.violations.push_back({OiViolation::Kind::empty_not_zero, empty, {}});

  for (const ClassSeq& c : states) {
    ++report.states_checked;
    const double rate = mu(c);
    if (!c.empty() && !(rate > 0.0)) {
      report.violations.push_back({OiViolation::Kind::zero_rate, c, {}});
      continue;
    }
    const double tol = kRelTol * std::max(1.0, std::abs(rate));

    ClassSeq extended = c;
    extended.push_back(0);
    for (int i = 0; i < num_classes; ++i) {
      extended.back() = i;
      if (mu(extended) < rate - tol)
        report.violations.push_back(
            {OiViolation::Kind::monotonicity, c, extended});
    }

    if (static_cast<int>(c.size()) <= max_permutation_length && c.size() > 1) {
      ClassSeq perm = c;
      std::sort(perm.begin(), perm.end());
      do {
        if (std::abs(mu(perm) - rate) > tol) {
          report.violations.push_back(
              {OiViolation::Kind::order_dependence, c, perm});
          break;
        }
      } while (std::next_permutation(perm.begin(), perm.end()));
    }
  }
  return report;
}

OiReport check_oi_axioms(const ClusterModel& model,
                         std::span<const ClassSeq> states) {
  RateFn mu = [&model](std::span<const int> c) { return sequence_rate(model, c); };
  return check_oi_axioms(mu, model.num_classes(), states);
}

std::vector<ClassSeq> enumerate_states(int num_classes, int max_len,
                                       std::size_t max_states) {
  if (num_classes < 1) throw std::invalid_argument("need at least one class");
  std::size_t count = 1, level = 1;
  for (int l = 1; l <= max_len; ++l) {
    level *= static_cast<std::size_t>(num_classes);
    count += level;
    if (count > max_states)
      throw std::invalid_argument("state enumeration exceeds the cap");
  }
  std::vector<ClassSeq> states;
  states.reserve(count);
  states.push_back({});
  std::size_t level_begin = 0;
  for (int l = 1; l <= max_len; ++l) {
    const std::size_t level_end = states.size();
    for (std::size_t k = level_begin; k < level_end; ++k) {
      for (int i = 0; i < num_classes; ++i) {
        ClassSeq next = states[k];
        next.push_back(i);
        states.push_back(std::move(next));
      }
    }
    level_begin = level_end;
  }
  return states;
}

}  // namespace clusterq
