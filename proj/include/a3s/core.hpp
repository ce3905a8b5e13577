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

// Dataset, partition and geometric primitives shared by every other module.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "a3s/error.hpp"

namespace a3s {

using SampleId = std::uint32_t;
using ClusterId = std::uint32_t;

/// Dense row-major matrix of doubles.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) throw ConfigError("matrix data size does not match shape");
  }

  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }

  bool all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
  }
};

/// Samples to be clustered. Labels are only ever read by the simulated oracle
/// and by the evaluation metrics.
struct Dataset {
  Matrix features;
  std::optional<std::vector<std::int64_t>> labels;
  std::optional<std::vector<std::string>> assets;
  std::vector<Matrix> views;

  std::size_t size() const { return features.rows; }
  std::size_t dims() const { return features.cols; }
  bool has_labels() const { return labels.has_value(); }

  void validate() const {
    if (features.rows < 2) throw ConfigError("dataset needs at least 2 samples");
    if (features.cols < 1) throw ConfigError("dataset needs at least 1 feature column");
    if (features.data.size() != features.rows * features.cols)
      throw ConfigError("feature matrix is malformed");
    if (!features.all_finite()) throw ConfigError("feature matrix contains non-finite values");
    if (labels) {
      if (labels->size() != size()) throw ConfigError("label count does not match sample count");
      for (auto y : *labels)
        if (y < 0) throw ConfigError("labels must be non-negative integers");
    }
    if (assets && assets->size() != size())
      throw ConfigError("asset count does not match sample count");
    for (const auto& v : views) {
      if (v.rows != size()) throw ConfigError("every view must have one row per sample");
      if (v.cols < 1 || !v.all_finite()) throw ConfigError("view matrix is empty or non-finite");
    }
  }
};

inline double distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return std::sqrt(acc);
}

inline double distance(const Matrix& x, SampleId i, SampleId j) { return distance(x.row(i), x.row(j)); }

/// Runs body(begin, end) over [0, n) on the available hardware threads. Each
/// index is visited exactly once, so results written per index are identical
/// regardless of thread count.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body) {
  std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(1, n / 256));
  if (workers <= 1) {
    body(0, n);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b >= e) break;
    pool.emplace_back([&body, b, e] { body(b, e); });
  }
  for (auto& t : pool) t.join();
}

// ---------------------------------------------------------------------------
// Clustering
// ---------------------------------------------------------------------------

/// A partition of sample ids. Cluster ids are never reused: merge and split
/// retire the old ids and mint fresh ones, so caches keyed by id stay valid.
class Clustering {
 public:
  Clustering() = default;

  static Clustering singletons(std::size_t n) {
    Clustering c;
    c.assignment_.resize(n);
    for (SampleId s = 0; s < n; ++s) {
      c.assignment_[s] = s;
      c.clusters_.emplace(s, std::vector<SampleId>{s});
    }
    c.next_id_ = static_cast<ClusterId>(n);
    return c;
  }

  /// Builds a partition from per-sample labels. Distinct label values are
  /// mapped to cluster ids 0..k-1 in ascending label order.
  template <typename Label>
  static Clustering from_labels(std::span<const Label> labels) {
    std::map<Label, ClusterId> ids;
    for (const auto& y : labels) ids.emplace(y, 0);
    ClusterId next = 0;
    for (auto& [y, id] : ids) id = next++;
    Clustering c;
    c.assignment_.resize(labels.size());
    for (std::size_t s = 0; s < labels.size(); ++s) {
      const ClusterId id = ids.at(labels[s]);
      c.assignment_[s] = id;
      c.clusters_[id].push_back(static_cast<SampleId>(s));
    }
    c.next_id_ = next;
    return c;
  }

  template <typename Label>
  static Clustering from_labels(const std::vector<Label>& labels) {
    return from_labels(std::span<const Label>(labels));
  }

  std::size_t size() const { return assignment_.size(); }
  std::size_t cluster_count() const { return clusters_.size(); }
  ClusterId next_id() const { return next_id_; }

  ClusterId cluster_of(SampleId s) const { return assignment_.at(s); }
  std::span<const ClusterId> assignment() const { return assignment_; }
  bool contains(ClusterId id) const { return clusters_.count(id) != 0; }

  const std::vector<SampleId>& members(ClusterId id) const {
    auto it = clusters_.find(id);
    if (it == clusters_.end()) throw ConfigError("unknown cluster id " + std::to_string(id));
    return it->second;
  }

  std::size_t cluster_size(ClusterId id) const { return members(id).size(); }

  /// Ordered by cluster id.
  const std::map<ClusterId, std::vector<SampleId>>& clusters() const { return clusters_; }

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> out;
    out.reserve(clusters_.size());
    for (const auto& [id, m] : clusters_) out.push_back(m.size());
    return out;
  }

  /// Dense relabeling 0..k-1 in ascending cluster-id order.
  std::vector<std::uint32_t> dense_labels() const {
    std::vector<std::uint32_t> out(size());
    std::uint32_t next = 0;
    for (const auto& [id, m] : clusters_) {
      for (auto s : m) out[s] = next;
      ++next;
    }
    return out;
  }

  ClusterId merge(ClusterId a, ClusterId b) {
    if (a == b) throw ConfigError("cannot merge a cluster with itself");
    auto ia = clusters_.find(a);
    auto ib = clusters_.find(b);
    if (ia == clusters_.end() || ib == clusters_.end())
      throw ConfigError("merge of unknown cluster id");
    std::vector<SampleId> joined;
    joined.reserve(ia->second.size() + ib->second.size());
    std::merge(ia->second.begin(), ia->second.end(), ib->second.begin(), ib->second.end(),
               std::back_inserter(joined));
    clusters_.erase(ia);
    clusters_.erase(ib);
    const ClusterId id = next_id_++;
    for (auto s : joined) assignment_[s] = id;
    clusters_.emplace(id, std::move(joined));
    return id;
  }

  /// Replaces cluster w by the given groups, which must partition its members.
  /// New ids are minted in group order.
  std::vector<ClusterId> split(ClusterId w, const std::vector<std::vector<SampleId>>& groups) {
    auto it = clusters_.find(w);
    if (it == clusters_.end()) throw ConfigError("split of unknown cluster id");
    std::vector<SampleId> all;
    for (const auto& g : groups) {
      if (g.empty()) throw ConfigError("split produced an empty group");
      all.insert(all.end(), g.begin(), g.end());
    }
    std::sort(all.begin(), all.end());
    if (all != it->second) throw ConfigError("split groups do not partition the cluster members");
    clusters_.erase(it);
    std::vector<ClusterId> ids;
    ids.reserve(groups.size());
    for (const auto& g : groups) {
      std::vector<SampleId> m = g;
      std::sort(m.begin(), m.end());
      const ClusterId id = next_id_++;
      for (auto s : m) assignment_[s] = id;
      clusters_.emplace(id, std::move(m));
      ids.push_back(id);
    }
    return ids;
  }

  /// Checks that assignment and cluster map agree and cover every sample once.
  bool valid() const {
    std::size_t total = 0;
    for (const auto& [id, m] : clusters_) {
      if (m.empty() || !std::is_sorted(m.begin(), m.end())) return false;
      for (auto s : m)
        if (s >= assignment_.size() || assignment_[s] != id) return false;
      total += m.size();
    }
    return total == assignment_.size();
  }

  friend bool operator==(const Clustering& a, const Clustering& b) {
    return a.clusters_ == b.clusters_;
  }

 private:
  std::vector<ClusterId> assignment_;
  std::map<ClusterId, std::vector<SampleId>> clusters_;
  ClusterId next_id_ = 0;
};

// ---------------------------------------------------------------------------
// Neighbor graph
// ---------------------------------------------------------------------------

struct Neighbor {
  SampleId id;
  double distance;
};

/// Exact k-nearest-neighbor lists, ascending by (distance, id).
struct NeighborGraph {
  std::vector<std::vector<Neighbor>> lists;

  std::size_t size() const { return lists.size(); }
  const std::vector<Neighbor>& operator[](SampleId s) const { return lists[s]; }
};

inline bool neighbor_less(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
}

inline NeighborGraph build_neighbor_graph(const Matrix& x, std::size_t m) {
  if (m == 0) throw ConfigError("neighbor count must be positive");
  if (x.rows < 2) throw ConfigError("neighbor graph needs at least 2 samples");
  if (!x.all_finite()) throw ConfigError("feature matrix contains non-finite values");
  const std::size_t n = x.rows;
  const std::size_t k = std::min(m, n - 1);
  NeighborGraph g;
  g.lists.resize(n);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    std::vector<std::pair<double, SampleId>> sq(n - 1);
    for (std::size_t i = begin; i < end; ++i) {
      const auto xi = x.row(i);
      std::size_t c = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const auto xj = x.row(j);
        double acc = 0.0;
        for (std::size_t d = 0; d < x.cols; ++d) {
          const double diff = xi[d] - xj[d];
          acc += diff * diff;
        }
        sq[c++] = {acc, static_cast<SampleId>(j)};
      }
      std::nth_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(k - 1), sq.end());
      // sqrt can map distinct squared distances onto the same value, so keep
      // everything within rounding distance of the cut before the final sort.
      const double cut = sq[k - 1].first * (1.0 + 1e-12);
      std::vector<Neighbor> cand;
      for (const auto& [d2, j] : sq)
        if (d2 <= cut) cand.push_back({j, std::sqrt(d2)});
      std::sort(cand.begin(), cand.end(), neighbor_less);
      cand.resize(k);
      g.lists[i] = std::move(cand);
    }
  });
  return g;
}

inline NeighborGraph build_neighbor_graph(const Dataset& data, std::size_t m) {
  return build_neighbor_graph(data.features, m);
}

// ---------------------------------------------------------------------------
// Cluster geometry
// ---------------------------------------------------------------------------

/// Member minimizing the sum of Euclidean distances to the other members.
inline SampleId medoid(std::span<const SampleId> members, const Matrix& x) {
  if (members.empty()) throw ConfigError("medoid of an empty cluster");
  const std::size_t n = members.size();
  if (n == 1) return members[0];
  std::vector<double> sums(n, 0.0);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const double d = distance(x, members[a], members[b]);
      sums[a] += d;
      sums[b] += d;
    }
  std::size_t best = 0;
  for (std::size_t a = 1; a < n; ++a) {
    if (sums[a] < sums[best] || (sums[a] == sums[best] && members[a] < members[best])) best = a;
  }
  return members[best];
}

inline SampleId medoid(std::span<const SampleId> members, const Dataset& data) {
  return medoid(members, data.features);
}

/// Members ordered by distance from center; the center itself comes first.
inline std::vector<Neighbor> distance_ranking(std::span<const SampleId> members, SampleId center,
                                              const Matrix& x) {
  std::vector<Neighbor> order;
  order.reserve(members.size());
  bool found = false;
  for (auto s : members) {
    if (s == center) {
      found = true;
      continue;
    }
    order.push_back({s, distance(x, center, s)});
  }
  if (!found) throw ConfigError("center is not a member of the cluster");
  std::sort(order.begin(), order.end(), neighbor_less);
  order.insert(order.begin(), Neighbor{center, 0.0});
  return order;
}

/// Rank (1-based) of the sample bounding a sphere that holds a fraction rho
/// of n members.
inline std::size_t radius_rank(double rho, std::size_t n) {
  const auto r = static_cast<std::size_t>(std::ceil(rho * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(r, 1, n);
}

/// The member j whose distance from center defines a sphere containing
/// ceil(rho * |members|) members, counting the center.
inline SampleId radius_sample(std::span<const SampleId> members, SampleId center, double rho,
                              const Matrix& x) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in (0, 1]");
  if (members.empty()) throw ConfigError("radius sample of an empty cluster");
  const auto order = distance_ranking(members, center, x);
  return order[radius_rank(rho, members.size()) - 1].id;
}

inline SampleId radius_sample(std::span<const SampleId> members, SampleId center, double rho,
                              const Dataset& data) {
  return radius_sample(members, center, rho, data.features);
}

}  // namespace a3s
