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

// The active aggregation and splitting loop.
//
// After an adaptive initialization the engine repeatedly picks the cluster
// pair with the best expected NMI gain, purity-tests both clusters, merges
// them if their medoids are must-linked and splits whichever cluster failed
// its test. Every oracle answer goes through the constraint store.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <functional>
#include <iomanip>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "a3s/constraints.hpp"
#include "a3s/core.hpp"
#include "a3s/init.hpp"
#include "a3s/metrics.hpp"
#include "a3s/oracle.hpp"
#include "a3s/pairwise.hpp"
#include "a3s/purity.hpp"
#include "a3s/query_strategy.hpp"

namespace a3s {

using Json = nlohmann::ordered_json;

enum class OracleMode { Simulated, Interactive };

struct SessionConfig {
  std::size_t budget = 600;
  std::optional<std::size_t> max_iterations;  // default: 4 x initial cluster count
  std::size_t batch = kDefaultBatch;
  std::optional<double> tau;  // default: chosen from the initial clustering
  InitConfig init;
  std::size_t neighbors = kDefaultNeighbors;
  std::size_t kappa = kDefaultKappa;  // 0: full cross-pair aggregation
  std::size_t pseudo_k = 0;           // 0: round(sqrt(N))
  double epsilon = kDefaultEpsilon;
  std::uint64_t seed = 0;
  std::size_t refine_budget = 0;
  std::string output_dir;
  OracleMode oracle = OracleMode::Simulated;

  void validate() const {
    if (max_iterations && *max_iterations == 0) throw ConfigError("max iterations must be at least 1");
    if (batch == 0) throw ConfigError("batch must be at least 1");
    if (neighbors == 0) throw ConfigError("neighbor count must be positive");
    if (tau && !(*tau >= 0.0 && *tau <= 1.0)) throw ConfigError("tau must lie in [0, 1]");
    if (!(epsilon > 0.0 && epsilon < 0.5)) throw ConfigError("epsilon must lie in (0, 0.5)");
    init.validate();
  }
};

/// Graph, calibrated models and probability store; everything the engine
/// needs that does not depend on the oracle.
struct PreparedModel {
  NeighborGraph graph;
  std::vector<IsotonicModel> models;
  PairProbabilityStore store;
};

inline PreparedModel prepare_model(const Dataset& data, const SessionConfig& config) {
  data.validate();
  config.validate();
  PreparedModel p;
  p.graph = build_neighbor_graph(data.features, config.neighbors);
  PairwiseOptions opt;
  opt.neighbors = config.neighbors;
  opt.pseudo_k = config.pseudo_k;
  opt.epsilon = config.epsilon;
  opt.seed = config.seed;
  p.models = fit_pairwise_models(data, p.graph, opt);
  p.store = build_store(p.graph, p.models, data, config.epsilon);
  return p;
}

struct MetricsSnapshot {
  std::size_t queries_used = 0;
  std::size_t k = 0;
  std::optional<MetricsReport> report;
};

/// Ordered engine events, one JSON object per line. Carries no wall-clock
/// data so a fixed seed reproduces it byte for byte.
class RunLog {
 public:
  using Observer = std::function<void(const Json&)>;

  void append(Json event) {
    event["seq"] = lines_.size() + 1;
    lines_.push_back(event.dump());
    if (sink_) *sink_ << lines_.back() << '\n' << std::flush;
    for (const auto& o : observers_) o(event);
  }

  void set_sink(std::ostream* os) { sink_ = os; }
  void add_observer(Observer o) { observers_.push_back(std::move(o)); }

  const std::vector<std::string>& lines() const { return lines_; }
  std::vector<std::string> tail(std::size_t n) const {
    const std::size_t start = lines_.size() > n ? lines_.size() - n : 0;
    return {lines_.begin() + static_cast<std::ptrdiff_t>(start), lines_.end()};
  }

  std::string text() const {
    std::string out;
    for (const auto& l : lines_) out += l + '\n';
    return out;
  }

 private:
  std::vector<std::string> lines_;
  std::ostream* sink_ = nullptr;
  std::vector<Observer> observers_;
};

inline ClusterId merge_clusters(Clustering& c, ClusterId i, ClusterId j) { return c.merge(i, j); }

inline std::vector<ClusterId> apply_split(Clustering& c, ClusterId w, const std::vector<std::vector<SampleId>>& groups) {
  return c.split(w, groups);
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

/// Appends `seq, s, t, ML|CL, oracle|inferred, timestamp` lines.
class ConstraintLogWriter {
 public:
  explicit ConstraintLogWriter(std::ostream& os) : os_(&os) {}

  void write(const QueryRecord& r) {
    line(r.s, r.t, r.value, "oracle");
    for (const auto& ch : r.inferred) line(ch.s, ch.t, ch.value, "inferred");
    os_->flush();
  }

 private:
  void line(SampleId s, SampleId t, Relation v, const char* source) {
    *os_ << ++seq_ << ", " << s << ", " << t << ", " << to_string(v) << ", " << source << ", " << utc_timestamp()
         << '\n';
  }

  std::ostream* os_;
  std::size_t seq_ = 0;
};

/// Oracle answers, in order, from a constraint log.
inline std::vector<RecordedAnswer> read_constraint_log(std::istream& is) {
  std::vector<RecordedAnswer> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) {
      const auto b = f.find_first_not_of(" \t\r");
      const auto e = f.find_last_not_of(" \t\r");
      fields.push_back(b == std::string::npos ? "" : f.substr(b, e - b + 1));
    }
    // A trailing line cut short by a crash carries no usable answer.
    if (fields.size() < 5) {
      if (is.peek() == EOF) break;
      throw IoError("malformed constraint log line " + std::to_string(lineno));
    }
    if (fields[4] != "oracle") continue;
    try {
      out.push_back({static_cast<SampleId>(std::stoul(fields[1])), static_cast<SampleId>(std::stoul(fields[2])),
                     relation_from_string(fields[3])});
    } catch (const std::exception&) {
      throw IoError("malformed constraint log line " + std::to_string(lineno));
    }
  }
  return out;
}

struct RunResult {
  Clustering clustering;
  Clustering initial;
  std::size_t initial_k = 0;
  double tau = kDefaultTau;
  std::size_t queries_used = 0;
  std::size_t iterations = 0;
  std::string stop_reason;
  std::vector<MetricsSnapshot> series;
};

class Engine {
 public:
  Engine(const Dataset& data, const PreparedModel& model, SessionConfig config, Oracle& oracle)
      : data_(&data),
        model_(&model),
        config_(std::move(config)),
        constraints_(data.size()),
        broker_(oracle, constraints_, config_.budget) {
    config_.validate();
    if (data.has_labels()) truth_ = Clustering::from_labels(*data.labels);
    broker_.add_listener([this](const QueryRecord& r) { on_answer(r); });
  }

  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;

  RunLog& log() { return log_; }
  QueryBroker& broker() { return broker_; }
  const ConstraintStore& constraints() const { return constraints_; }
  const Clustering& clustering() const { return clustering_; }
  const std::vector<MetricsSnapshot>& series() const { return series_; }
  double tau() const { return tau_; }

  /// Mirrors every billed answer to a constraint log.
  void set_constraint_log(std::ostream* os) { clog_ = os ? std::make_unique<ConstraintLogWriter>(*os) : nullptr; }

  /// Called after every clustering change, from the engine thread.
  void set_change_observer(std::function<void(const Clustering&, const MetricsSnapshot&)> f) {
    on_change_ = std::move(f);
  }

  /// Starts from `initial` instead of running the configured initializer.
  void initialize(std::optional<Clustering> initial = std::nullopt) {
    std::size_t adaptive_k = 0;
    if (initial) {
      if (initial->size() != data_->size() || !initial->valid()) throw ConfigError("initial clustering is invalid");
      clustering_ = std::move(*initial);
      adaptive_k = clustering_.cluster_count();
    } else {
      auto r = a3s::initialize(*data_, model_->store, config_.init, config_.seed);
      clustering_ = std::move(r.clustering);
      adaptive_k = r.adaptive_k;
    }
    initial_ = clustering_;
    tau_ = config_.tau ? *config_.tau : choose_tau(clustering_, model_->store, data_->features);
    scorer_ = AggregationScorer{&model_->store, &model_->graph, &data_->features, config_.kappa};
    index_ = std::make_unique<CandidateIndex>(clustering_, constraints_, scorer_);
    Json ev{{"event", "init"},
            {"method", to_string(config_.init.method)},
            {"adaptive_k", adaptive_k},
            {"k", clustering_.cluster_count()},
            {"tau", tau_}};
    log_.append(std::move(ev));
    snapshot();
    initialized_ = true;
  }

  RunResult run() {
    if (!initialized_) initialize();
    const std::size_t limit = config_.max_iterations ? *config_.max_iterations : 4 * initial_.cluster_count();
    std::string stop = "max_iterations";
    std::size_t iter = 0;
    for (; iter < limit; ++iter) {
      if (broker_.exhausted()) {
        stop = "budget";
        break;
      }
      const auto cand = index_->select(config_.batch);
      if (!cand) {
        stop = "no_candidate";
        break;
      }
      log_.append(Json{{"event", "select"},
                       {"i", cand->i},
                       {"j", cand->j},
                       {"log_odds", cand->aggregation_log_odds},
                       {"prob", cand->aggregation_prob},
                       {"delta_h", cand->delta_h},
                       {"gain", cand->expected_gain}});
      const auto va = test(cand->i);
      const auto vb = va.budget_exhausted ? va : test(cand->j);
      if (va.budget_exhausted || vb.budget_exhausted) {
        stop = "budget";
        break;
      }
      if (va.passed && vb.passed) {
        const auto rel = broker_.ask(medoid_of(cand->i), medoid_of(cand->j), QueryKind::MedoidMerge);
        if (!rel) {
          stop = "budget";
          break;
        }
        if (*rel == Relation::MustLink) {
          merge(cand->i, cand->j);
        } else {
          index_->reject(cand->i, cand->j);
          log_.append(Json{{"event", "keep_apart"}, {"i", cand->i}, {"j", cand->j}});
        }
        continue;
      }
      bool complete = true;
      if (!va.passed) complete = split(cand->i) && complete;
      if (!vb.passed && complete) complete = split(cand->j);
      if (!complete) {
        stop = "budget";
        break;
      }
    }
    log_.append(Json{{"event", "stop"}, {"reason", stop}, {"iterations", iter}, {"queries_used", broker_.used()}});
    RunResult out;
    out.clustering = clustering_;
    out.initial = initial_;
    out.initial_k = initial_.cluster_count();
    out.tau = tau_;
    out.queries_used = broker_.used();
    out.iterations = iter;
    out.stop_reason = stop;
    out.series = series_;
    return out;
  }

  /// Offers every singleton, lowest id first, to its neighboring clusters in
  /// descending aggregation probability until one of their medoids is
  /// must-linked to it. Returns the number of queries spent.
  std::size_t refine_outliers(std::size_t extra_budget) {
    if (!initialized_) throw ConfigError("refine_outliers requires an initialized engine");
    broker_.extend_budget(extra_budget);
    const std::size_t before = broker_.used();
    std::vector<ClusterId> singles;
    for (const auto& [id, m] : clustering_.clusters())
      if (m.size() == 1) singles.push_back(id);
    for (auto id : singles) {
      if (!clustering_.contains(id) || clustering_.cluster_size(id) != 1) continue;
      const SampleId s = clustering_.members(id).front();
      std::vector<std::pair<double, ClusterId>> targets;
      for (auto other : detail::adjacent_clusters(clustering_, id, model_->store)) {
        if (cluster_relation(constraints_, clustering_, id, other) == Relation::CannotLink) continue;
        targets.push_back({-scorer_.log_odds(clustering_.members(id), clustering_.members(other)), other});
      }
      std::sort(targets.begin(), targets.end());
      bool stopped = false;
      for (const auto& [neg, other] : targets) {
        const auto rel = broker_.ask(s, medoid_of(other), QueryKind::Refinement);
        if (!rel) {
          stopped = true;
          break;
        }
        if (*rel == Relation::MustLink) {
          merge(id, other);
          break;
        }
      }
      if (stopped) break;
    }
    const std::size_t spent = broker_.used() - before;
    log_.append(Json{{"event", "refine"}, {"queries", spent}, {"queries_used", broker_.used()}});
    return spent;
  }

  SampleId medoid_of(ClusterId id) {
    auto it = medoids_.find(id);
    if (it != medoids_.end()) return it->second;
    const SampleId m = medoid(clustering_.members(id), data_->features);
    medoids_.emplace(id, m);
    return m;
  }

 private:
  PurityVerdict test(ClusterId id) {
    if (trusted_.count(id)) {
      PurityVerdict v;
      v.passed = true;
      return v;
    }
    const auto& members = clustering_.members(id);
    auto dit = density_.find(id);
    if (dit == density_.end()) dit = density_.emplace(id, density_value(members, model_->store, data_->features)).first;
    const auto v = purity_test(members, dit->second, tau_, medoid_of(id), broker_, data_->features);
    if (!v.budget_exhausted)
      log_.append(Json{{"event", "purity_test"},
                       {"cluster", id},
                       {"passed", v.passed},
                       {"density", v.density_value},
                       {"density_passed", v.density_passed},
                       {"queries", v.oracle_queries_spent}});
    if (v.passed) trusted_.insert(id);
    return v;
  }

  void merge(ClusterId a, ClusterId b) {
    index_->retire(a);
    index_->retire(b);
    const ClusterId c = merge_clusters(clustering_, a, b);
    forget(a);
    forget(b);
    index_->add(c);
    log_.append(Json{{"event", "merge"}, {"i", a}, {"j", b}, {"into", c}, {"size", clustering_.cluster_size(c)}});
    snapshot();
  }

  /// Returns false when the budget ran out part way.
  bool split(ClusterId w) {
    const auto members = clustering_.members(w);
    auto result = subcluster_partition(members, broker_, data_->features, medoid_of(w));
    auto groups = result.subclusters;
    const bool complete = result.complete();
    if (!complete) groups.push_back(result.residual);
    if (groups.size() == 1) return complete;  // nothing to change
    index_->retire(w);
    const auto ids = apply_split(clustering_, w, groups);
    forget(w);
    for (std::size_t g = 0; g < ids.size(); ++g) {
      if (g < result.subclusters.size()) trusted_.insert(ids[g]);
      index_->add(ids[g]);
    }
    Json ev{{"event", "split"}, {"cluster", w}, {"into", ids}, {"queries", result.queries}};
    if (!complete) ev["residual"] = ids.back();
    log_.append(std::move(ev));
    snapshot();
    return complete;
  }

  void forget(ClusterId id) {
    medoids_.erase(id);
    density_.erase(id);
    trusted_.erase(id);
  }

  void on_answer(const QueryRecord& r) {
    if (index_) {
      std::vector<PairChange> changes = r.inferred;
      changes.push_back({std::min(r.s, r.t), std::max(r.s, r.t), r.value});
      index_->on_constraints(changes);
    }
    if (clog_) clog_->write(r);
    log_.append(Json{{"event", "query"},
                     {"n", r.index},
                     {"s", r.s},
                     {"t", r.t},
                     {"answer", to_string(r.value)},
                     {"kind", to_string(r.kind)},
                     {"inferred", r.inferred.size()}});
  }

  void snapshot() {
    MetricsSnapshot snap;
    snap.queries_used = broker_.used();
    snap.k = clustering_.cluster_count();
    Json ev{{"event", "metrics"}, {"queries_used", snap.queries_used}, {"k", snap.k}};
    if (truth_) {
      snap.report = evaluate(clustering_, *truth_);
      ev["nmi"] = snap.report->nmi;
      ev["ari"] = snap.report->ari;
      ev["purity"] = snap.report->purity;
      ev["upsilon"] = snap.report->fission_rate;
      if (snap.report->entropy_ratio) ev["r"] = *snap.report->entropy_ratio;
    }
    log_.append(std::move(ev));
    series_.push_back(snap);
    if (on_change_) on_change_(clustering_, snap);
  }

  const Dataset* data_;
  const PreparedModel* model_;
  SessionConfig config_;
  ConstraintStore constraints_;
  QueryBroker broker_;
  Clustering clustering_;
  Clustering initial_;
  std::optional<Clustering> truth_;
  double tau_ = kDefaultTau;
  AggregationScorer scorer_;
  std::unique_ptr<CandidateIndex> index_;
  std::unordered_map<ClusterId, SampleId> medoids_;
  std::unordered_map<ClusterId, double> density_;
  std::unordered_set<ClusterId> trusted_;
  RunLog log_;
  std::vector<MetricsSnapshot> series_;
  std::unique_ptr<ConstraintLogWriter> clog_;
  std::function<void(const Clustering&, const MetricsSnapshot&)> on_change_;
  bool initialized_ = false;
};

/// Convenience wrapper: prepare, initialize and run with refinement.
inline RunResult run(const Dataset& data, const SessionConfig& config, Oracle& oracle) {
  const auto model = prepare_model(data, config);
  Engine engine(data, model, config, oracle);
  auto result = engine.run();
  if (config.refine_budget > 0) {
    engine.refine_outliers(config.refine_budget);
    result.clustering = engine.clustering();
    result.queries_used = engine.broker().used();
    result.series = engine.series();
  }
  return result;
}

struct BaselineResult {
  std::optional<std::size_t> queries_to_target;  // nullopt when the cap was hit first
  std::size_t queries_used = 0;
  double final_nmi = 0.0;
};

/// Reference strategy: query uniformly random sample pairs that straddle
/// two clusters and are not known cannot-linked; merge on must-link.
inline BaselineResult random_pair_baseline(const Clustering& initial, const std::vector<std::int64_t>& labels,
                                           double target_nmi, std::size_t cap, std::uint64_t seed) {
  const std::size_t n = initial.size();
  if (labels.size() != n) throw ConfigError("baseline labels do not match the clustering");
  const auto truth = Clustering::from_labels(labels);
  Clustering c = initial;
  ConstraintStore store(n);
  SimulatedOracle oracle(labels);
  QueryBroker broker(oracle, store, cap);
  std::mt19937_64 rng(seed);
  BaselineResult out;
  double current = nmi(c, truth);
  if (current >= target_nmi) out.queries_to_target = 0;
  std::size_t misses = 0;
  while (!out.queries_to_target && !broker.exhausted() && c.cluster_count() > 1) {
    const auto s = static_cast<SampleId>(rng() % n);
    const auto t = static_cast<SampleId>(rng() % n);
    if (s == t || c.cluster_of(s) == c.cluster_of(t) || store.query_state(s, t) != Relation::Unknown) {
      if (++misses > 1000 * (cap + n)) break;
      continue;
    }
    const auto rel = broker.ask(s, t, QueryKind::Baseline);
    if (rel && *rel == Relation::MustLink) {
      c.merge(c.cluster_of(s), c.cluster_of(t));
      current = nmi(c, truth);
      if (current >= target_nmi) out.queries_to_target = broker.used();
    }
  }
  out.queries_used = broker.used();
  out.final_nmi = current;
  return out;
}

}  // namespace a3s
