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

// Oracles and the broker that bills them.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "a3s/constraints.hpp"
#include "a3s/core.hpp"

namespace a3s {

/// Why the engine is asking; shown to human annotators.
enum class QueryKind { PurityTest, MedoidMerge, SplitStep, Refinement, Baseline };

inline const char* to_string(QueryKind k) {
  switch (k) {
    case QueryKind::PurityTest:
      return "purity_test";
    case QueryKind::MedoidMerge:
      return "medoid_merge";
    case QueryKind::SplitStep:
      return "split_step";
    case QueryKind::Refinement:
      return "refinement";
    default:
      return "baseline";
  }
}

class Oracle {
 public:
  virtual ~Oracle() = default;
  /// Blocks until the pair is judged. Never returns Relation::Unknown.
  virtual Relation answer(SampleId s, SampleId t, QueryKind kind) = 0;
};

/// Truthful oracle backed by ground-truth labels.
class SimulatedOracle : public Oracle {
 public:
  explicit SimulatedOracle(std::vector<std::int64_t> labels) : labels_(std::move(labels)) {}

  Relation answer(SampleId s, SampleId t, QueryKind) override {
    if (s >= labels_.size() || t >= labels_.size()) throw ConfigError("oracle query out of range");
    return labels_[s] == labels_[t] ? Relation::MustLink : Relation::CannotLink;
  }

 private:
  std::vector<std::int64_t> labels_;
};

struct RecordedAnswer {
  SampleId s;
  SampleId t;
  Relation value;
};

/// Replays previously recorded answers in order, then defers to `live`.
/// A deterministic engine asks the same questions again, so any mismatch
/// means the log belongs to a different run.
class ReplayOracle : public Oracle {
 public:
  ReplayOracle(std::vector<RecordedAnswer> recorded, Oracle* live)
      : pending_(recorded.begin(), recorded.end()), live_(live) {}

  Relation answer(SampleId s, SampleId t, QueryKind kind) override {
    if (!pending_.empty()) {
      const auto r = pending_.front();
      const bool same = (r.s == s && r.t == t) || (r.s == t && r.t == s);
      if (!same)
        throw IoError("replay log diverges: expected (" + std::to_string(r.s) + ", " + std::to_string(r.t) +
                      "), engine asked (" + std::to_string(s) + ", " + std::to_string(t) + ")");
      pending_.pop_front();
      return r.value;
    }
    if (!live_) throw OracleUnavailable("replay log exhausted and no live oracle attached");
    return live_->answer(s, t, kind);
  }

  std::size_t remaining() const { return pending_.size(); }

 private:
  std::deque<RecordedAnswer> pending_;
  Oracle* live_;
};

struct QueryRecord {
  std::size_t index;  // 1-based count of billed queries
  SampleId s;
  SampleId t;
  Relation value;
  QueryKind kind;
  std::vector<PairChange> inferred;
};

/// Routes every pairwise question through the constraint store first; only
/// unknown pairs reach the oracle and are billed against the budget.
class QueryBroker {
 public:
  using Listener = std::function<void(const QueryRecord&)>;

  QueryBroker(Oracle& oracle, ConstraintStore& store, std::size_t budget)
      : oracle_(&oracle), store_(&store), budget_(budget) {}

  /// Known relation, fresh oracle answer, or nullopt once the budget is spent.
  std::optional<Relation> ask(SampleId s, SampleId t, QueryKind kind) {
    const Relation known = store_->query_state(s, t);
    if (known != Relation::Unknown) return known;
    if (used_ >= budget_) return std::nullopt;
    const Relation value = oracle_->answer(s, t, kind);
    if (value == Relation::Unknown) throw ConfigError("oracle returned no verdict");
    QueryRecord rec{used_ + 1, s, t, value, kind, store_->add_constraint(s, t, value)};
    ++used_;
    for (const auto& l : listeners_) l(rec);
    return value;
  }

  void add_listener(Listener l) { listeners_.push_back(std::move(l)); }

  std::size_t used() const { return used_; }
  std::size_t budget() const { return budget_; }
  std::size_t remaining() const { return budget_ > used_ ? budget_ - used_ : 0; }
  bool exhausted() const { return used_ >= budget_; }
  void extend_budget(std::size_t extra) { budget_ += extra; }

  const ConstraintStore& store() const { return *store_; }

 private:
  Oracle* oracle_;
  ConstraintStore* store_;
  std::size_t budget_;
  std::size_t used_ = 0;
  std::vector<Listener> listeners_;
};

}  // namespace a3s
