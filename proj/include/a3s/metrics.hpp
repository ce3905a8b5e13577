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

// Partition-comparison measures. All logarithms are natural.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "a3s/core.hpp"

namespace a3s {

namespace detail {

struct Cell {
  ClusterId a;
  ClusterId b;
  std::size_t count;
};

/// Non-zero cells of the contingency table, ordered by (a, b).
inline std::vector<Cell> contingency(const Clustering& x, const Clustering& y) {
  if (x.size() != y.size()) throw ConfigError("partitions cover different sample counts");
  std::vector<std::pair<ClusterId, ClusterId>> keys(x.size());
  for (SampleId s = 0; s < x.size(); ++s) keys[s] = {x.cluster_of(s), y.cluster_of(s)};
  std::sort(keys.begin(), keys.end());
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < keys.size();) {
    std::size_t j = i;
    while (j < keys.size() && keys[j] == keys[i]) ++j;
    cells.push_back({keys[i].first, keys[i].second, j - i});
    i = j;
  }
  return cells;
}

inline double comb2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace detail

inline double entropy(const Clustering& c) {
  const double n = static_cast<double>(c.size());
  double h = 0.0;
  for (const auto& [id, m] : c.clusters()) {
    const double p = static_cast<double>(m.size()) / n;
    h -= p * std::log(p);
  }
  return h;
}

inline double mutual_information(const Clustering& a, const Clustering& b) {
  const auto cells = detail::contingency(a, b);
  const double n = static_cast<double>(a.size());
  double mi = 0.0;
  for (const auto& c : cells) {
    const double nij = static_cast<double>(c.count);
    const double ai = static_cast<double>(a.cluster_size(c.a));
    const double bj = static_cast<double>(b.cluster_size(c.b));
    mi += nij / n * std::log(n * nij / (ai * bj));
  }
  return std::max(0.0, mi);
}

/// 2 I(a;b) / (H(a) + H(b)). Two single-cluster partitions score 1; when only
/// one of them is a single cluster the score is 0.
inline double nmi(const Clustering& a, const Clustering& b) {
  if (a.size() != b.size()) throw ConfigError("partitions cover different sample counts");
  const double ha = entropy(a);
  const double hb = entropy(b);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  if (ha == 0.0 || hb == 0.0) return 0.0;
  return std::clamp(2.0 * mutual_information(a, b) / (ha + hb), 0.0, 1.0);
}

/// Hubert-Arabie adjusted Rand index.
inline double ari(const Clustering& a, const Clustering& b) {
  const auto cells = detail::contingency(a, b);
  const double n = static_cast<double>(a.size());
  double index = 0.0;
  for (const auto& c : cells) index += detail::comb2(static_cast<double>(c.count));
  double sa = 0.0, sb = 0.0;
  for (const auto& [id, m] : a.clusters()) sa += detail::comb2(static_cast<double>(m.size()));
  for (const auto& [id, m] : b.clusters()) sb += detail::comb2(static_cast<double>(m.size()));
  const double expected = sa * sb / detail::comb2(n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

/// Largest overlap of each cluster with a true class, keyed by cluster id.
inline std::map<ClusterId, std::size_t> dominant_counts(const Clustering& c, const Clustering& truth) {
  std::map<ClusterId, std::size_t> out;
  for (const auto& cell : detail::contingency(c, truth)) {
    auto& best = out[cell.a];
    best = std::max(best, cell.count);
  }
  return out;
}

inline double purity(const Clustering& c, const Clustering& truth) {
  std::size_t total = 0;
  for (const auto& [id, cnt] : dominant_counts(c, truth)) total += cnt;
  return static_cast<double>(total) / static_cast<double>(c.size());
}

inline std::map<ClusterId, double> cluster_purities(const Clustering& c, const Clustering& truth) {
  std::map<ClusterId, double> out;
  for (const auto& [id, cnt] : dominant_counts(c, truth))
    out[id] = static_cast<double>(cnt) / static_cast<double>(c.cluster_size(id));
  return out;
}

inline double fission_rate(std::size_t k, std::size_t true_k) {
  if (true_k == 0) throw ConfigError("true class count must be positive");
  return static_cast<double>(k) / static_cast<double>(true_k);
}

inline double entropy_ratio(const Clustering& omega, const Clustering& truth) {
  const double ht = entropy(truth);
  if (ht == 0.0) throw ConfigError("entropy ratio is undefined for a single-class ground truth");
  return entropy(omega) / ht;
}

struct MetricsReport {
  double nmi = 0.0;
  double ari = 0.0;
  double purity = 0.0;
  double fission_rate = 0.0;
  std::optional<double> entropy_ratio;
  std::size_t cluster_count = 0;
};

inline MetricsReport evaluate(const Clustering& omega, const Clustering& truth) {
  MetricsReport r;
  r.nmi = nmi(omega, truth);
  r.ari = ari(omega, truth);
  r.purity = purity(omega, truth);
  r.cluster_count = omega.cluster_count();
  r.fission_rate = fission_rate(omega.cluster_count(), truth.cluster_count());
  if (entropy(truth) > 0.0) r.entropy_ratio = entropy_ratio(omega, truth);
  return r;
}

}  // namespace a3s
