#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "clusterq/model.hpp"
#include "clusterq/random.hpp"

namespace testutil {

/// Three unit servers; server 1 dedicated to class 1, server 2 to class 2,
/// server 3 shared.
inline clusterq::ClusterModel symmetric_toy() {
  return clusterq::ClusterModel({1.0, 1.0, 1.0}, {{0, 2}, {1, 2}});
}

/// Two unit servers; class 1 uses both, class 2 only the shared one
/// (the mu2 = 0 variant of the three-server layout).
inline clusterq::ClusterModel asymmetric_toy() {
  return clusterq::ClusterModel({1.0, 1.0}, {{0, 1}, {1}});
}

/// Deterministic pseudo-random model: capacities in [0.5, 2), non-empty
/// random server subsets.
inline clusterq::ClusterModel random_model(int servers, int classes,
                                           std::uint64_t seed) {
  clusterq::Rng rng(seed);
  std::vector<double> caps(servers);
  for (double& c : caps) c = 0.5 + 1.5 * rng.uniform01();
  std::vector<std::vector<int>> class_servers(classes);
  for (auto& set : class_servers) {
    for (int s = 0; s < servers; ++s)
      if (rng.bernoulli(0.5)) set.push_back(s);
    if (set.empty()) set.push_back(rng.uniform_int(servers));
  }
  return clusterq::ClusterModel(caps, class_servers);
}

inline bool close(double a, double b, double rel) {
  if (std::isnan(a) || std::isnan(b)) return false;
  return std::abs(a - b) <= rel * std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace testutil
