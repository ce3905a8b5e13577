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

// Initial clustering with an adaptive cluster count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <queue>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "a3s/core.hpp"
#include "a3s/pairwise.hpp"

namespace a3s {

enum class InitMethod { Probabilistic, KMeans, Agglomerative };

inline const char* to_string(InitMethod m) {
  switch (m) {
    case InitMethod::KMeans:
      return "kmeans";
    case InitMethod::Agglomerative:
      return "agglomerative";
    default:
      return "probabilistic";
  }
}

inline InitMethod init_method_from_string(const std::string& s) {
  if (s == "probabilistic") return InitMethod::Probabilistic;
  if (s == "kmeans") return InitMethod::KMeans;
  if (s == "agglomerative") return InitMethod::Agglomerative;
  throw ConfigError("unknown init method '" + s + "'");
}

struct InitConfig {
  InitMethod method = InitMethod::Probabilistic;
  double merge_threshold = 0.6;
  std::optional<std::size_t> k_override;
  double ratio = 1.0;

  void validate() const {
    if (!(merge_threshold > 0.5 && merge_threshold < 1.0)) throw ConfigError("merge threshold must lie in (0.5, 1)");
    if (!(ratio > 0.0) || !std::isfinite(ratio)) throw ConfigError("init ratio must be positive");
    if (k_override && *k_override == 0) throw ConfigError("k override must be positive");
  }
};

struct MergeStep {
  ClusterId a;
  ClusterId b;
  ClusterId merged;
  double probability;
};

struct ProbabilisticResult {
  Clustering clustering;
  std::vector<MergeStep> trace;
};

/// Greedy agglomeration from singletons: repeatedly merge the pair with the
/// highest cross-pair aggregation probability while it exceeds the
/// threshold. Only pairs joined by a stored sample pair can qualify, since
/// every other pair sits at the (tiny) default probability.
inline ProbabilisticResult probabilistic_cluster_traced(const PairProbabilityStore& store, std::size_t n,
                                                        double merge_threshold) {
  if (store.size() != n) throw ConfigError("probability store does not cover N samples");
  if (!(merge_threshold > 0.5 && merge_threshold < 1.0)) throw ConfigError("merge threshold must lie in (0.5, 1)");
  ProbabilisticResult out;
  out.clustering = Clustering::singletons(n);
  Clustering& c = out.clustering;
  const double lo_default = store.default_log_odds();
  const double threshold = logit(merge_threshold);

  // Per cluster: neighbor cluster -> (sum of stored logits, stored pair count).
  struct Link {
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::unordered_map<ClusterId, std::unordered_map<ClusterId, Link>> adj;
  adj.reserve(n * 2);
  for (SampleId s = 0; s < n; ++s)
    for (const auto& e : store.neighbors(s)) {
      auto& l = adj[s][e.id];
      l.sum += e.log_odds;
      l.count += 1;
    }

  auto log_odds = [&](ClusterId a, ClusterId b, const Link& l) {
    const double total = static_cast<double>(c.cluster_size(a)) * static_cast<double>(c.cluster_size(b));
    return l.sum + (total - static_cast<double>(l.count)) * lo_default;
  };

  struct Item {
    double lo;
    ClusterId a, b;  // a < b
  };
  auto worse = [](const Item& x, const Item& y) {
    if (x.lo != y.lo) return x.lo < y.lo;
    return std::pair{x.a, x.b} > std::pair{y.a, y.b};
  };
  std::priority_queue<Item, std::vector<Item>, decltype(worse)> heap(worse);
  for (const auto& [a, links] : adj)
    for (const auto& [b, l] : links)
      if (a < b) {
        const double lo = log_odds(a, b, l);
        if (lo > threshold) heap.push({lo, a, b});
      }

  while (!heap.empty()) {
    const Item top = heap.top();
    heap.pop();
    if (!c.contains(top.a) || !c.contains(top.b)) continue;
    const ClusterId merged = c.merge(top.a, top.b);
    out.trace.push_back({top.a, top.b, merged, sigmoid(top.lo)});

    auto la = std::move(adj[top.a]);
    auto lb = std::move(adj[top.b]);
    adj.erase(top.a);
    adj.erase(top.b);
    if (la.size() < lb.size()) std::swap(la, lb);
    for (const auto& [k, l] : lb) {
      auto& t = la[k];
      t.sum += l.sum;
      t.count += l.count;
    }
    la.erase(top.a);
    la.erase(top.b);
    for (const auto& [k, l] : la) {
      auto& back = adj[k];
      back.erase(top.a);
      back.erase(top.b);
      back[merged] = l;
      const double lo = log_odds(merged, k, l);
      if (lo > threshold) heap.push({lo, std::min(merged, k), std::max(merged, k)});
    }
    adj[merged] = std::move(la);
  }
  return out;
}

inline Clustering probabilistic_cluster(const PairProbabilityStore& store, std::size_t n,
                                        double merge_threshold = 0.6) {
  return probabilistic_cluster_traced(store, n, merge_threshold).clustering;
}

/// Minimum-variance (Ward) agglomerative clustering cut at k clusters.
/// Builds the full dendrogram with the nearest-neighbor chain algorithm on
/// cluster centroids, then replays the n - k cheapest merges.
inline Clustering ward_cluster(const Matrix& x, std::size_t k) {
  const std::size_t n = x.rows;
  const std::size_t dim = x.cols;
  if (k == 0 || k > n) throw ConfigError("agglomerative cluster count must lie in [1, N]");
  std::vector<std::vector<double>> centroid(n);
  std::vector<double> weight(n, 1.0);
  std::vector<char> active(n, 1);
  for (std::size_t i = 0; i < n; ++i) centroid[i].assign(x.row(i).begin(), x.row(i).end());

  auto cost = [&](std::size_t a, std::size_t b) {
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = centroid[a][d] - centroid[b][d];
      acc += diff * diff;
    }
    return weight[a] * weight[b] / (weight[a] + weight[b]) * acc;
  };

  struct Step {
    double height;
    std::size_t a, b;  // representative slots; the merged cluster keeps slot a
    std::size_t order;
  };
  std::vector<Step> steps;
  steps.reserve(n - 1);
  std::vector<std::size_t> chain;
  std::size_t remaining = n;
  std::size_t next_start = 0;
  while (remaining > 1) {
    if (chain.empty()) {
      while (!active[next_start]) ++next_start;
      chain.push_back(next_start);
    }
    const std::size_t cur = chain.back();
    const std::size_t prev = chain.size() >= 2 ? chain[chain.size() - 2] : n;
    std::size_t best = n;
    double best_cost = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (!active[j] || j == cur) continue;
      const double cj = cost(cur, j);
      // Prefer the chain predecessor on ties so reciprocal pairs terminate.
      if (cj < best_cost || (cj == best_cost && (j == prev || (best != prev && j < best)))) {
        best = j;
        best_cost = cj;
      }
    }
    if (best == prev) {
      chain.pop_back();
      chain.pop_back();
      const std::size_t a = std::min(cur, prev), b = std::max(cur, prev);
      steps.push_back({best_cost, a, b, steps.size()});
      const double wa = weight[a], wb = weight[b];
      for (std::size_t d = 0; d < dim; ++d) centroid[a][d] = (wa * centroid[a][d] + wb * centroid[b][d]) / (wa + wb);
      weight[a] = wa + wb;
      active[b] = 0;
      std::vector<double>().swap(centroid[b]);
      --remaining;
    } else {
      chain.push_back(best);
    }
  }

  std::stable_sort(steps.begin(), steps.end(), [](const Step& l, const Step& r) { return l.height < r.height; });
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  // Slots name clusters only at the time of the merge, so resolve them
  // through the merge order: replaying in sorted-height order is valid for
  // Ward because its dendrogram has no inversions.
  for (std::size_t i = 0; i < n - k; ++i) {
    const auto ra = find(steps[i].a), rb = find(steps[i].b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<std::size_t> root(n);
  for (std::size_t i = 0; i < n; ++i) root[i] = find(i);
  return Clustering::from_labels(root);
}

struct InitResult {
  Clustering clustering;
  std::size_t adaptive_k = 0;
};

/// Target count for the conventional initializers: round(r * k), in [1, N].
inline std::size_t scaled_cluster_count(std::size_t k, double ratio, std::size_t n) {
  const auto target = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(k)));
  return std::clamp<std::size_t>(target, 1, n);
}

inline InitResult initialize(const Dataset& data, const PairProbabilityStore& store, const InitConfig& config,
                             std::uint64_t seed) {
  config.validate();
  const std::size_t n = data.size();
  if (config.k_override && *config.k_override > n) throw ConfigError("k override exceeds the sample count");
  InitResult out;
  if (config.method == InitMethod::Probabilistic) {
    out.clustering = probabilistic_cluster(store, n, config.merge_threshold);
    out.adaptive_k = out.clustering.cluster_count();
    return out;
  }
  const std::size_t k_adaptive = config.k_override
                                     ? *config.k_override
                                     : probabilistic_cluster(store, n, config.merge_threshold).cluster_count();
  out.adaptive_k = k_adaptive;
  const std::size_t target = scaled_cluster_count(k_adaptive, config.ratio, n);
  if (config.method == InitMethod::KMeans)
    out.clustering = Clustering::from_labels(kmeans(data.features, target, seed).labels);
  else
    out.clustering = ward_cluster(data.features, target);
  return out;
}

}  // namespace a3s
