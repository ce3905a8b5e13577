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

// Cluster-pair scoring.
//
// The aggregation probability of clusters A and B is the posterior that all
// cross pairs share a class given that each cluster is internally coherent:
//
//   P(A ~ B) = prod p_st / (prod p_st + prod (1 - p_st)),  s in A, t in B
//
// which is sigmoid(sum_st logit p_st). The nearest-neighbor variant restricts
// the sum to each member of the smaller cluster and its kappa nearest members
// of the larger one. A candidate's expected NMI gain is ranked by
// P(A ~ B) * dh, where dh is the entropy removed by the merge.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "a3s/constraints.hpp"
#include "a3s/core.hpp"
#include "a3s/pairwise.hpp"

namespace a3s {

inline constexpr std::size_t kDefaultKappa = 4;
inline constexpr std::size_t kDefaultBatch = 10;

/// log(sigmoid(x)) without underflow.
inline double log_sigmoid(double x) {
  if (x >= 0.0) return -std::log1p(std::exp(-x));
  return x - std::log1p(std::exp(x));
}

namespace detail {

/// Orders two member lists so the result does not depend on argument order:
/// the smaller list first, ties broken by the lower first element.
inline std::pair<std::span<const SampleId>, std::span<const SampleId>> canonical_sides(
    std::span<const SampleId> a, std::span<const SampleId> b) {
  const bool swap = b.size() < a.size() || (b.size() == a.size() && !b.empty() && b.front() < a.front());
  return swap ? std::pair{b, a} : std::pair{a, b};
}

inline std::vector<SampleId> sorted_copy(std::span<const SampleId> m) {
  std::vector<SampleId> v(m.begin(), m.end());
  if (!std::is_sorted(v.begin(), v.end())) std::sort(v.begin(), v.end());
  return v;
}

}  // namespace detail

/// Sum of logit p_st over every cross pair; pairs outside the store count
/// at the default probability.
inline double aggregation_log_odds(std::span<const SampleId> a, std::span<const SampleId> b,
                                   const PairProbabilityStore& store) {
  const auto [small, large_span] = detail::canonical_sides(a, b);
  const auto large = detail::sorted_copy(large_span);
  double sum = 0.0;
  std::size_t stored = 0;
  for (auto s : small) {
    for (const auto& e : store.neighbors(s)) {
      if (std::binary_search(large.begin(), large.end(), e.id)) {
        sum += e.log_odds;
        ++stored;
      }
    }
  }
  const double total = static_cast<double>(small.size()) * static_cast<double>(large.size());
  return sum + (total - static_cast<double>(stored)) * store.default_log_odds();
}

inline double aggregation_probability(std::span<const SampleId> a, std::span<const SampleId> b,
                                      const PairProbabilityStore& store) {
  return sigmoid(aggregation_log_odds(a, b, store));
}

/// The kappa members of `large` nearest to s, by (distance, id).
inline std::vector<SampleId> nearest_members(SampleId s, std::span<const SampleId> large_sorted,
                                             std::size_t kappa, const NeighborGraph& graph, const Matrix& x) {
  std::vector<SampleId> out;
  const std::size_t want = std::min(kappa, large_sorted.size());
  if (s < graph.size()) {
    // A neighbor list is an exact prefix of the global ranking, so the first
    // `want` hits inside `large` are exactly its nearest members.
    for (const auto& nb : graph[s]) {
      if (std::binary_search(large_sorted.begin(), large_sorted.end(), nb.id)) {
        out.push_back(nb.id);
        if (out.size() == want) return out;
      }
    }
  }
  std::vector<Neighbor> ranked;
  ranked.reserve(large_sorted.size());
  for (auto t : large_sorted) ranked.push_back({t, distance(x, s, t)});
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(want), ranked.end(),
                    neighbor_less);
  out.clear();
  for (std::size_t i = 0; i < want; ++i) out.push_back(ranked[i].id);
  return out;
}

inline double aggregation_log_odds_knn(std::span<const SampleId> a, std::span<const SampleId> b,
                                       const PairProbabilityStore& store, const NeighborGraph& graph,
                                       const Matrix& x, std::size_t kappa) {
  if (kappa == 0) throw ConfigError("kappa must be at least 1");
  const auto [small, large_span] = detail::canonical_sides(a, b);
  const auto large = detail::sorted_copy(large_span);
  double sum = 0.0;
  for (auto s : small)
    for (auto t : nearest_members(s, large, kappa, graph, x)) sum += store.log_odds(s, t);
  return sum;
}

inline double aggregation_probability_knn(std::span<const SampleId> a, std::span<const SampleId> b,
                                          const PairProbabilityStore& store, const NeighborGraph& graph,
                                          const Matrix& x, std::size_t kappa) {
  return sigmoid(aggregation_log_odds_knn(a, b, store, graph, x, kappa));
}

/// Entropy removed from a partition of N samples when clusters of sizes p
/// and q are merged, in nats.
inline double delta_entropy(std::size_t p, std::size_t q, std::size_t n) {
  if (p == 0 || q == 0) throw ConfigError("cluster sizes must be positive");
  if (p + q > n) throw ConfigError("merged cluster exceeds the sample count");
  const double dp = static_cast<double>(p), dq = static_cast<double>(q);
  const double pq = dp + dq;
  return (pq * std::log(pq) - dp * std::log(dp) - dq * std::log(dq)) / static_cast<double>(n);
}

/// Proportional score; the pair-independent factor 2I/(H+H')^2 is dropped.
inline double expected_nmi_gain(double probability, double delta_h) { return probability * delta_h; }

/// Whether merging two clusters with a shared dominant class provably does
/// not lower NMI.
inline bool check_aggregation_guarantee(double t1, double t2, double n1) {
  const double t = std::min(t1, t2);
  return t >= 0.7 && n1 >= 2.0 * (1.0586 - t);
}

struct CandidatePair {
  ClusterId i = 0;
  ClusterId j = 0;
  double aggregation_log_odds = 0.0;
  double aggregation_prob = 0.0;
  double delta_h = 0.0;
  double expected_gain = 0.0;
};

/// Chooses between the full cross-pair product and its nearest-neighbor
/// restriction.
struct AggregationScorer {
  const PairProbabilityStore* store = nullptr;
  const NeighborGraph* graph = nullptr;
  const Matrix* features = nullptr;
  std::size_t kappa = 0;  // 0 selects the full product

  double log_odds(std::span<const SampleId> a, std::span<const SampleId> b) const {
    if (kappa == 0) return aggregation_log_odds(a, b, *store);
    return aggregation_log_odds_knn(a, b, *store, *graph, *features, kappa);
  }
};

namespace detail {

using PairKey = std::pair<ClusterId, ClusterId>;

inline PairKey pair_key(ClusterId a, ClusterId b) { return a < b ? PairKey{a, b} : PairKey{b, a}; }

/// Clusters joined to `id` by at least one stored sample pair, ascending.
inline std::vector<ClusterId> adjacent_clusters(const Clustering& c, ClusterId id, const PairProbabilityStore& store) {
  std::vector<ClusterId> out;
  for (auto s : c.members(id))
    for (const auto& e : store.neighbors(s)) {
      const ClusterId other = c.cluster_of(e.id);
      if (other != id) out.push_back(other);
    }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline CandidatePair make_candidate(const Clustering& c, PairKey key, double log_odds) {
  CandidatePair cp;
  cp.i = key.first;
  cp.j = key.second;
  cp.aggregation_log_odds = log_odds;
  cp.aggregation_prob = sigmoid(log_odds);
  cp.delta_h = delta_entropy(c.cluster_size(key.first), c.cluster_size(key.second), c.size());
  cp.expected_gain = expected_nmi_gain(cp.aggregation_prob, cp.delta_h);
  return cp;
}

/// Step 2 of the selection: largest expected gain, compared in the log
/// domain so vanishing probabilities still rank; ties by log-odds then ids.
inline const CandidatePair* best_by_gain(const std::vector<CandidatePair>& batch) {
  const CandidatePair* best = nullptr;
  double best_score = -std::numeric_limits<double>::infinity();
  for (const auto& cp : batch) {
    const double score = log_sigmoid(cp.aggregation_log_odds) + std::log(cp.delta_h);
    if (!best || score > best_score ||
        (score == best_score && (cp.aggregation_log_odds > best->aggregation_log_odds ||
                                 (cp.aggregation_log_odds == best->aggregation_log_odds &&
                                  std::tie(cp.i, cp.j) < std::tie(best->i, best->j))))) {
      best = &cp;
      best_score = score;
    }
  }
  return best;
}

inline bool rank_before(const CandidatePair& a, const CandidatePair& b) {
  if (a.aggregation_log_odds != b.aggregation_log_odds) return a.aggregation_log_odds > b.aggregation_log_odds;
  return std::tie(a.i, a.j) < std::tie(b.i, b.j);
}

}  // namespace detail

/// Scores every eligible cluster pair from scratch. Eligible means joined by
/// a stored sample pair, not known cannot-linked and not in `rejected`. The
/// `batch` pairs with the highest aggregation probability are kept and the
/// one with the largest expected gain is returned.
inline std::optional<CandidatePair> select_candidate(const Clustering& clustering, const ConstraintStore& constraints,
                                                     const AggregationScorer& scorer, std::size_t batch,
                                                     const std::set<std::pair<ClusterId, ClusterId>>& rejected = {}) {
  if (batch == 0) throw ConfigError("batch must be at least 1");
  std::vector<CandidatePair> scored;
  for (const auto& [id, members] : clustering.clusters()) {
    for (auto other : detail::adjacent_clusters(clustering, id, *scorer.store)) {
      if (other < id) continue;
      if (rejected.count({id, other})) continue;
      if (cluster_relation(constraints, clustering, id, other) == Relation::CannotLink) continue;
      scored.push_back(detail::make_candidate(clustering, {id, other},
                                              scorer.log_odds(members, clustering.members(other))));
    }
  }
  if (scored.empty()) return std::nullopt;
  const std::size_t keep = std::min(batch, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(),
                    detail::rank_before);
  scored.resize(keep);
  return *detail::best_by_gain(scored);
}

inline std::optional<CandidatePair> select_candidate(const Clustering& clustering, const PairProbabilityStore& store,
                                                     const ConstraintStore& constraints, std::size_t batch) {
  AggregationScorer scorer{&store, nullptr, nullptr, 0};
  return select_candidate(clustering, constraints, scorer, batch);
}

/// Incrementally maintained version of select_candidate for the engine loop:
/// only pairs touching a changed cluster are rescored, and cluster-pair
/// relations are updated from the constraint changes as they happen.
class CandidateIndex {
 public:
  CandidateIndex(const Clustering& clustering, const ConstraintStore& constraints, AggregationScorer scorer)
      : clustering_(&clustering), constraints_(&constraints), scorer_(scorer) {
    for (const auto& [id, m] : clustering.clusters()) add_cluster(id, /*only_higher=*/true);
  }

  /// Call before the clustering is modified.
  void retire(ClusterId id) {
    auto it = adjacency_.find(id);
    if (it == adjacency_.end()) return;
    for (auto other : it->second) {
      erase_pair(detail::pair_key(id, other));
      adjacency_[other].erase(id);
    }
    adjacency_.erase(it);
  }

  /// Call after a cluster was created by a merge or split.
  void add(ClusterId id) { add_cluster(id, /*only_higher=*/false); }

  /// Feed constraint changes while the clustering still has the layout under
  /// which they were made.
  void on_constraints(std::span<const PairChange> changes) {
    for (const auto& ch : changes) {
      const ClusterId a = clustering_->cluster_of(ch.s);
      const ClusterId b = clustering_->cluster_of(ch.t);
      if (a == b) continue;
      auto it = pairs_.find(detail::pair_key(a, b));
      if (it == pairs_.end()) continue;
      Entry& e = it->second;
      const Relation before = e.relation;
      if (ch.value == Relation::MustLink)
        e.relation = Relation::MustLink;
      else if (e.relation != Relation::MustLink)
        e.relation = Relation::CannotLink;
      if (before != e.relation) refresh(it->first, e);
    }
  }

  /// Permanently drops a pair (its ids are never reused).
  void reject(ClusterId a, ClusterId b) {
    auto it = pairs_.find(detail::pair_key(a, b));
    if (it == pairs_.end()) return;
    it->second.rejected = true;
    refresh(it->first, it->second);
  }

  std::optional<CandidatePair> select(std::size_t batch) const {
    if (batch == 0) throw ConfigError("batch must be at least 1");
    std::vector<CandidatePair> top;
    for (auto it = ranked_.begin(); it != ranked_.end() && top.size() < batch; ++it) {
      const auto& [neg, key] = *it;
      top.push_back(detail::make_candidate(*clustering_, key, -neg));
    }
    if (top.empty()) return std::nullopt;
    return *detail::best_by_gain(top);
  }

  std::size_t eligible_count() const { return ranked_.size(); }
  std::size_t pair_count() const { return pairs_.size(); }

 private:
  struct Entry {
    double log_odds;
    Relation relation;
    bool rejected = false;
    bool ranked = false;
  };
  using RankKey = std::pair<double, detail::PairKey>;  // (-log_odds, ids)

  void add_cluster(ClusterId id, bool only_higher) {
    auto& adj = adjacency_[id];
    for (auto other : detail::adjacent_clusters(*clustering_, id, *scorer_.store)) {
      adjacency_[other].insert(id);
      adj.insert(other);
      if (only_higher && other < id) continue;  // scored when `other` was added
      const auto key = detail::pair_key(id, other);
      Entry e;
      e.log_odds = scorer_.log_odds(clustering_->members(key.first), clustering_->members(key.second));
      e.relation = cluster_relation(*constraints_, *clustering_, id, other);
      auto [it, inserted] = pairs_.insert_or_assign(key, e);
      refresh(it->first, it->second);
    }
  }

  void refresh(const detail::PairKey& key, Entry& e) {
    const bool eligible = !e.rejected && e.relation != Relation::CannotLink;
    if (eligible == e.ranked) return;
    if (eligible)
      ranked_.insert({-e.log_odds, key});
    else
      ranked_.erase({-e.log_odds, key});
    e.ranked = eligible;
  }

  void erase_pair(const detail::PairKey& key) {
    auto it = pairs_.find(key);
    if (it == pairs_.end()) return;
    if (it->second.ranked) ranked_.erase({-it->second.log_odds, key});
    pairs_.erase(it);
  }

  const Clustering* clustering_;
  const ConstraintStore* constraints_;
  AggregationScorer scorer_;
  std::map<detail::PairKey, Entry> pairs_;
  std::set<RankKey> ranked_;
  std::unordered_map<ClusterId, std::set<ClusterId>> adjacency_;
};

}  // namespace a3s
