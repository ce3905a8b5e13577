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

// Slow, obviously-correct reference implementations used by the tests. None
// of these share code with the library beyond plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "a3s/constraints.hpp"
#include "a3s/core.hpp"

namespace oracle {

using a3s::Relation;
using a3s::SampleId;

// ---- partitions as plain label vectors -------------------------------------

inline std::vector<int> labels_of(const a3s::Clustering& c) {
  std::vector<int> out(c.size());
  for (SampleId s = 0; s < c.size(); ++s) out[s] = static_cast<int>(c.cluster_of(s));
  return out;
}

inline double entropy(const std::vector<int>& y) {
  std::map<int, double> count;
  for (int v : y) count[v] += 1.0;
  double h = 0.0;
  const double n = static_cast<double>(y.size());
  for (const auto& [k, c] : count) h -= (c / n) * std::log(c / n);
  return h;
}

/// I(a;b) = H(a) + H(b) - H(a,b), via the joint labels.
inline double mutual_information(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> joint;
  for (std::size_t i = 0; i < a.size(); ++i) joint[{a[i], b[i]}] += 1.0;
  double hj = 0.0;
  const double n = static_cast<double>(a.size());
  for (const auto& [k, c] : joint) hj -= (c / n) * std::log(c / n);
  return entropy(a) + entropy(b) - hj;
}

inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  const double ha = entropy(a), hb = entropy(b);
  if (ha == 0.0 && hb == 0.0) return 1.0;
  if (ha == 0.0 || hb == 0.0) return 0.0;
  return 2.0 * mutual_information(a, b) / (ha + hb);
}

/// Adjusted Rand index by explicit enumeration of all sample pairs.
inline double ari(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  double both = 0, only_a = 0, only_b = 0, total = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      both += sa && sb;
      only_a += sa;
      only_b += sb;
      total += 1;
    }
  const double expected = only_a * only_b / total;
  const double max_index = 0.5 * (only_a + only_b);
  if (max_index == expected) return 1.0;
  return (both - expected) / (max_index - expected);
}

inline double purity(const std::vector<int>& omega, const std::vector<int>& truth) {
  std::set<int> clusters(omega.begin(), omega.end());
  std::size_t hit = 0;
  for (int c : clusters) {
    std::map<int, std::size_t> votes;
    for (std::size_t i = 0; i < omega.size(); ++i)
      if (omega[i] == c) ++votes[truth[i]];
    std::size_t best = 0;
    for (const auto& [k, v] : votes) best = std::max(best, v);
    hit += best;
  }
  return static_cast<double>(hit) / static_cast<double>(omega.size());
}

// ---- geometry ---------------------------------------------------------------

inline double dist(const a3s::Matrix& x, std::size_t i, std::size_t j) {
  double acc = 0.0;
  for (std::size_t k = 0; k < x.cols; ++k) acc += (x(i, k) - x(j, k)) * (x(i, k) - x(j, k));
  return std::sqrt(acc);
}

/// Full all-pairs sort, truncated to m, ties by lower id.
inline std::vector<std::vector<std::pair<SampleId, double>>> knn(const a3s::Matrix& x, std::size_t m) {
  std::vector<std::vector<std::pair<SampleId, double>>> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    std::vector<std::pair<double, SampleId>> all;
    for (std::size_t j = 0; j < x.rows; ++j)
      if (j != i) all.push_back({dist(x, i, j), static_cast<SampleId>(j)});
    std::sort(all.begin(), all.end());
    for (std::size_t k = 0; k < std::min(m, all.size()); ++k) out[i].push_back({all[k].second, all[k].first});
  }
  return out;
}

inline SampleId medoid(const std::vector<SampleId>& members, const a3s::Matrix& x) {
  double best = INFINITY;
  SampleId arg = 0;
  for (auto a : members) {
    double s = 0.0;
    for (auto b : members) s += dist(x, a, b);
    if (s < best || (s == best && a < arg)) {
      best = s;
      arg = a;
    }
  }
  return arg;
}

// ---- constraint closure -----------------------------------------------------

struct Step {
  SampleId s;
  SampleId t;
  Relation value;
};

using StateMap = std::map<std::pair<SampleId, SampleId>, Relation>;

/// Fixpoint closure: must-links form union-find components; a cannot-link
/// between two samples spreads to every pair across their components.
/// nullopt when the sequence is contradictory.
inline std::optional<StateMap> closure(std::size_t n, const std::vector<Step>& steps) {
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v];
    return v;
  };
  for (const auto& st : steps)
    if (st.value == Relation::MustLink) parent[find(st.s)] = find(st.t);
  std::set<std::pair<std::size_t, std::size_t>> cl;
  for (const auto& st : steps)
    if (st.value == Relation::CannotLink) {
      auto a = find(st.s), b = find(st.t);
      if (a == b) return std::nullopt;
      cl.insert({std::min(a, b), std::max(a, b)});
    }
  StateMap out;
  std::set<SampleId> touched;
  for (const auto& st : steps) {
    touched.insert(st.s);
    touched.insert(st.t);
  }
  for (SampleId i = 0; i < n; ++i)
    for (SampleId j = i + 1; j < n; ++j) {
      const auto a = find(i), b = find(j);
      if (a == b) {
        if (touched.count(i) && touched.count(j)) out[{i, j}] = Relation::MustLink;
      } else if (cl.count({std::min(a, b), std::max(a, b)})) {
        out[{i, j}] = Relation::CannotLink;
      }
    }
  return out;
}

/// Plays steps through the library store; nullopt if it reports a
/// contradiction.
inline std::optional<StateMap> incremental(std::size_t n, const std::vector<Step>& steps) {
  a3s::ConstraintStore store(n);
  try {
    for (const auto& st : steps) store.add_constraint(st.s, st.t, st.value);
  } catch (const a3s::ContradictionError&) {
    return std::nullopt;
  }
  return store.state_map();
}

}  // namespace oracle
