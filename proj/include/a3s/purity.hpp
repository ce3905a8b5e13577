/*
 * Copyright (c) 2026, The a3s authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Cluster purity screening and oracle-driven splitting.

#include <algorithm>
#include <optional>
#include <span>
#include <vector>

#include "a3s/core.hpp"
#include "a3s/oracle.hpp"
#include "a3s/pairwise.hpp"

namespace a3s {

inline constexpr double kPurityProbeRadius = 0.7;
inline constexpr double kDensityRadius = 0.5;
inline constexpr double kDefaultTau = 0.5;

/// Average probability between each member i and the members j it is less
/// likely to share a class with than its half-radius sample; i.e. affinity
/// to the far half of the cluster. Clusters of at most 3 members, and
/// clusters where every such set is empty, score 1.
inline double density_value(std::span<const SampleId> members, const PairProbabilityStore& store, const Matrix& x) {
  if (members.empty()) throw ConfigError("density of an empty cluster");
  const std::size_t n = members.size();
  if (n <= 3) return 1.0;
  const std::size_t rank = radius_rank(kDensityRadius, n);
  double num = 0.0;
  std::size_t den = 0;
  std::vector<Neighbor> order(n);
  for (auto i : members) {
    for (std::size_t k = 0; k < n; ++k) {
      const auto j = members[k];
      order[k] = {j, j == i ? -1.0 : distance(x, i, j)};  // the center ranks first
    }
    std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(rank - 1), order.end(),
                     neighbor_less);
    const double ref = store.probability(i, order[rank - 1].id);
    for (auto j : members) {
      if (j == i) continue;
      const double p = store.probability(i, j);
      if (p < ref) {
        num += p;
        ++den;
      }
    }
  }
  return den == 0 ? 1.0 : num / static_cast<double>(den);
}

inline double density_value(std::span<const SampleId> members, const PairProbabilityStore& store,
                            const Dataset& data) {
  return density_value(members, store, data.features);
}

/// Mean density of the clusters larger than 3, minus 0.1, clamped to
/// [0, 1]; 0.5 when there is no such cluster.
inline double choose_tau(const Clustering& c, const PairProbabilityStore& store, const Matrix& x) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& [id, m] : c.clusters())
    if (m.size() > 3) {
      sum += density_value(m, store, x);
      ++count;
    }
  if (count == 0) return kDefaultTau;
  return std::clamp(sum / static_cast<double>(count) - 0.1, 0.0, 1.0);
}

inline double choose_tau(const Clustering& c, const PairProbabilityStore& store, const Dataset& data) {
  return choose_tau(c, store, data.features);
}

struct PurityVerdict {
  bool passed = false;
  double density_value = 1.0;
  bool density_passed = false;
  std::size_t oracle_queries_spent = 0;
  bool budget_exhausted = false;  // no verdict could be reached
};

/// Passes on density alone when it exceeds tau; otherwise asks whether the
/// medoid and its 0.7-radius sample share a class.
inline PurityVerdict purity_test(std::span<const SampleId> members, double density, double tau, SampleId center,
                                 QueryBroker& broker, const Matrix& x) {
  PurityVerdict v;
  v.density_value = density;
  if (density > tau) {
    v.passed = v.density_passed = true;
    return v;
  }
  const SampleId probe = radius_sample(members, center, kPurityProbeRadius, x);
  if (probe == center) {
    v.passed = true;
    return v;
  }
  const std::size_t before = broker.used();
  const auto rel = broker.ask(center, probe, QueryKind::PurityTest);
  v.oracle_queries_spent = broker.used() - before;
  if (!rel) {
    v.budget_exhausted = true;
    return v;
  }
  v.passed = *rel == Relation::MustLink;
  return v;
}

inline PurityVerdict purity_test(std::span<const SampleId> members, double tau, QueryBroker& broker,
                                 const PairProbabilityStore& store, const Matrix& x) {
  return purity_test(members, density_value(members, store, x), tau, medoid(members, x), broker, x);
}

struct SplitResult {
  std::vector<std::vector<SampleId>> subclusters;  // oracle-certified pure
  std::vector<SampleId> residual;                  // unprocessed when the budget ran out
  std::size_t queries = 0;

  bool complete() const { return residual.empty(); }
};

/// Walks the members outward from the medoid. Each sample is compared with
/// the first member of every existing subcluster, oldest subcluster first,
/// and joins the first one it is must-linked to; otherwise it opens a new
/// subcluster.
inline SplitResult subcluster_partition(std::span<const SampleId> members, QueryBroker& broker, const Matrix& x,
                                        std::optional<SampleId> center = std::nullopt) {
  if (members.size() < 2) throw ConfigError("subcluster partition needs at least 2 members");
  const SampleId c = center ? *center : medoid(members, x);
  const auto order = distance_ranking(members, c, x);
  const std::size_t before = broker.used();
  SplitResult out;
  out.subclusters.push_back({order[0].id});
  for (std::size_t k = 1; k < order.size(); ++k) {
    const SampleId i = order[k].id;
    bool placed = false;
    for (auto& sub : out.subclusters) {
      const auto rel = broker.ask(i, sub.front(), QueryKind::SplitStep);
      if (!rel) {
        for (std::size_t r = k; r < order.size(); ++r) out.residual.push_back(order[r].id);
        out.queries = broker.used() - before;
        return out;
      }
      if (*rel == Relation::MustLink) {
        sub.push_back(i);
        placed = true;
        break;
      }
    }
    if (!placed) out.subclusters.push_back({i});
  }
  out.queries = broker.used() - before;
  return out;
}

}  // namespace a3s
