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

// Must-link / cannot-link state kept transitively closed after every update.

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "a3s/core.hpp"

namespace a3s {

enum class Relation : std::int8_t { CannotLink = -1, Unknown = 0, MustLink = 1 };

inline Relation opposite(Relation r) {
  return r == Relation::MustLink ? Relation::CannotLink
         : r == Relation::CannotLink ? Relation::MustLink
                                     : Relation::Unknown;
}

inline const char* to_string(Relation r) {
  switch (r) {
    case Relation::MustLink:
      return "ML";
    case Relation::CannotLink:
      return "CL";
    default:
      return "UNKNOWN";
  }
}

inline Relation relation_from_string(const std::string& s) {
  if (s == "ML" || s == "must" || s == "must-link") return Relation::MustLink;
  if (s == "CL" || s == "cannot" || s == "cannot-link") return Relation::CannotLink;
  throw ConfigError("unknown relation '" + s + "'");
}

struct PairChange {
  SampleId s;
  SampleId t;
  Relation value;

  friend bool operator==(const PairChange&, const PairChange&) = default;
};

/// Sparse symmetric ternary state matrix. Every sample keeps the sets of
/// samples it is must-linked and cannot-linked to; absent pairs are unknown.
class ConstraintStore {
 public:
  ConstraintStore() = default;
  explicit ConstraintStore(std::size_t n) : must_(n), cannot_(n) {}

  std::size_t size() const { return must_.size(); }

  Relation query_state(SampleId s, SampleId t) const {
    check_id(s);
    check_id(t);
    if (s == t) return Relation::MustLink;
    if (must_[s].count(t)) return Relation::MustLink;
    if (cannot_[s].count(t)) return Relation::CannotLink;
    return Relation::Unknown;
  }

  const std::unordered_set<SampleId>& must_links(SampleId s) const { return must_.at(s); }
  const std::unordered_set<SampleId>& cannot_links(SampleId s) const { return cannot_.at(s); }

  /// Records (s, t) and restores the closure by fast transitive inference:
  /// for each endpoint i, its must-linked set plus i becomes a must-link
  /// clique and is cannot-linked to everything i is cannot-linked to.
  /// Returns the pairs inferred on top of (s, t). Throws ContradictionError,
  /// leaving the store untouched, if (s, t) is already known to be opposite.
  std::vector<PairChange> add_constraint(SampleId s, SampleId t, Relation value) {
    check_id(s);
    check_id(t);
    if (s == t) throw ConfigError("a constraint needs two distinct samples");
    if (value == Relation::Unknown) throw ConfigError("a constraint must be must-link or cannot-link");
    const Relation current = query_state(s, t);
    if (current == value) return {};
    if (current != Relation::Unknown) {
      std::ostringstream msg;
      msg << "constraint (" << s << ", " << t << ") " << to_string(value) << " contradicts the known "
          << to_string(current) << " state";
      throw ContradictionError(msg.str(), s, t);
    }

    std::vector<PairChange> changes;
    set(s, t, value);
    for (SampleId i : {s, t}) {
      std::vector<SampleId> ml(must_[i].begin(), must_[i].end());
      ml.push_back(i);
      std::sort(ml.begin(), ml.end());
      std::vector<SampleId> cl(cannot_[i].begin(), cannot_[i].end());
      std::sort(cl.begin(), cl.end());
      for (std::size_t a = 0; a < ml.size(); ++a)
        for (std::size_t b = a + 1; b < ml.size(); ++b)
          if (!must_[ml[a]].count(ml[b])) {
            set(ml[a], ml[b], Relation::MustLink);
            changes.push_back({ml[a], ml[b], Relation::MustLink});
          }
      for (auto p : ml)
        for (auto q : cl)
          if (!cannot_[p].count(q)) {
            set(p, q, Relation::CannotLink);
            changes.push_back({std::min(p, q), std::max(p, q), Relation::CannotLink});
          }
    }
    return changes;
  }

  /// Canonical (min id, max id) -> relation view of every known pair.
  std::map<std::pair<SampleId, SampleId>, Relation> state_map() const {
    std::map<std::pair<SampleId, SampleId>, Relation> out;
    for (SampleId s = 0; s < size(); ++s) {
      for (auto t : must_[s])
        if (s < t) out.emplace(std::pair{s, t}, Relation::MustLink);
      for (auto t : cannot_[s])
        if (s < t) out.emplace(std::pair{s, t}, Relation::CannotLink);
    }
    return out;
  }

  std::size_t pair_count() const {
    std::size_t total = 0;
    for (SampleId s = 0; s < size(); ++s) total += must_[s].size() + cannot_[s].size();
    return total / 2;
  }

  /// First line: sample count. Then one "s t ML|CL" line per known pair.
  void serialize(std::ostream& os) const {
    os << size() << '\n';
    for (const auto& [key, rel] : state_map()) os << key.first << ' ' << key.second << ' ' << to_string(rel) << '\n';
  }

  static ConstraintStore deserialize(std::istream& is) {
    std::size_t n = 0;
    if (!(is >> n)) throw IoError("constraint snapshot is missing its sample count");
    ConstraintStore store(n);
    SampleId s = 0, t = 0;
    std::string rel;
    while (is >> s >> t >> rel) {
      if (s >= n || t >= n || s == t) throw IoError("constraint snapshot has an invalid pair");
      store.set(s, t, relation_from_string(rel));
    }
    return store;
  }

  friend bool operator==(const ConstraintStore& a, const ConstraintStore& b) {
    return a.size() == b.size() && a.state_map() == b.state_map();
  }

 private:
  void check_id(SampleId s) const {
    if (s >= size()) throw ConfigError("sample id " + std::to_string(s) + " out of range");
  }

  void set(SampleId p, SampleId q, Relation r) {
    if (r == Relation::MustLink) {
      must_[p].insert(q);
      must_[q].insert(p);
    } else {
      cannot_[p].insert(q);
      cannot_[q].insert(p);
    }
  }

  std::vector<std::unordered_set<SampleId>> must_;
  std::vector<std::unordered_set<SampleId>> cannot_;
};

namespace detail {

template <typename InOther>
Relation relation_scan(const ConstraintStore& store, std::span<const SampleId> small,
                       std::span<const SampleId> other, InOther in_other) {
  bool cannot = false;
  for (auto x : small) {
    const auto& ml = store.must_links(x);
    if (ml.size() <= other.size()) {
      for (auto y : ml)
        if (in_other(y)) return Relation::MustLink;
    } else {
      for (auto y : other)
        if (ml.count(y)) return Relation::MustLink;
    }
    if (cannot) continue;
    const auto& cl = store.cannot_links(x);
    if (cl.size() <= other.size()) {
      for (auto y : cl)
        if (in_other(y)) {
          cannot = true;
          break;
        }
    } else {
      for (auto y : other)
        if (cl.count(y)) {
          cannot = true;
          break;
        }
    }
  }
  return cannot ? Relation::CannotLink : Relation::Unknown;
}

}  // namespace detail

/// Must-link if any cross pair is must-linked, cannot-link if some cross pair
/// is cannot-linked and none is must-linked, unknown otherwise.
inline Relation cluster_relation(const ConstraintStore& store, std::span<const SampleId> a,
                                 std::span<const SampleId> b) {
  std::vector<SampleId> small(a.begin(), a.end()), other(b.begin(), b.end());
  if (small.size() > other.size()) std::swap(small, other);
  std::sort(other.begin(), other.end());
  return detail::relation_scan(store, small, other, [&](SampleId y) {
    return std::binary_search(other.begin(), other.end(), y);
  });
}

inline Relation cluster_relation(const ConstraintStore& store, const Clustering& clustering, ClusterId a,
                                 ClusterId b) {
  const auto& ma = clustering.members(a);
  const auto& mb = clustering.members(b);
  const bool a_small = ma.size() <= mb.size();
  const ClusterId other_id = a_small ? b : a;
  return detail::relation_scan(store, a_small ? ma : mb, a_small ? mb : ma,
                               [&](SampleId y) { return clustering.cluster_of(y) == other_id; });
}

}  // namespace a3s
