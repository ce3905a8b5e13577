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

// HTTP front end for human oracles.
//
//   POST   /session                 {config}            -> {"id": ...}
//   DELETE /session/{id}
//   GET    /session/{id}/pending[?wait=ms]             -> {"pending": {...}|null}
//   POST   /session/{id}/answer     {query_id, verdict} -> progress
//   GET    /session/{id}/status                         -> metrics + size histogram
//   GET    /session/{id}/log[?n=lines]                  -> run log tail
//
// Each session runs its job on a dedicated thread; the job's oracle calls
// block until a human answers the pending query.

#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "a3s/engine.hpp"
#include "a3s/io.hpp"

namespace a3s {

/// Deterministic 2-D principal-component projection; each axis is oriented
/// so its largest-magnitude loading is positive.
inline std::vector<std::array<double, 2>> pca_2d(const Matrix& x) {
  const auto n = static_cast<Eigen::Index>(x.rows);
  const auto d = static_cast<Eigen::Index>(x.cols);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> m(x.data.data(), n, d);
  const Eigen::RowVectorXd mean = m.colwise().mean();
  const Eigen::MatrixXd centered = m.rowwise() - mean;
  const Eigen::MatrixXd cov = centered.transpose() * centered / std::max<double>(1.0, static_cast<double>(n - 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  Eigen::MatrixXd axes = Eigen::MatrixXd::Zero(d, 2);
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, d); ++k) {
    Eigen::VectorXd v = solver.eigenvectors().col(d - 1 - k);  // eigenvalues ascend
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    axes.col(k) = v;
  }
  const Eigen::MatrixXd proj = centered * axes;
  std::vector<std::array<double, 2>> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = {proj(i, 0), proj(i, 1)};
  return out;
}

inline Relation verdict_from_string(const std::string& s) {
  if (s == "must" || s == "ML" || s == "must-link") return Relation::MustLink;
  if (s == "cannot" || s == "CL" || s == "cannot-link") return Relation::CannotLink;
  return Relation::Unknown;
}

inline const char* verdict_name(Relation r) { return r == Relation::MustLink ? "must" : "cannot"; }

struct PendingQuery {
  std::uint64_t id = 0;
  SampleId s = 0;
  SampleId t = 0;
  QueryKind kind = QueryKind::MedoidMerge;
};

class Session {
 public:
  using Job = std::function<void(Session&)>;

  struct Spec {
    std::size_t n = 0;
    std::size_t budget = 0;
    std::vector<std::array<double, 2>> coords;
    std::optional<std::vector<std::string>> assets;
    Job job;
  };

  struct AnswerOutcome {
    int status = 200;
    Json body;
  };

  Session(std::string id, Spec spec) : id_(std::move(id)), spec_(std::move(spec)), mirror_(spec_.n) {
    status_ = Json{{"k", nullptr}, {"queries_used", 0}};
  }

  ~Session() { close(); }

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  const std::string& id() const { return id_; }

  void start() {
    thread_ = std::thread([this] {
      try {
        spec_.job(*this);
        set_state("finished", "");
      } catch (const OracleUnavailable& e) {
        set_state("closed", e.what());
      } catch (const std::exception& e) {
        set_state("failed", e.what());
      }
    });
  }

  /// Stops the job at its next oracle call and waits for it.
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
    if (thread_.joinable() && thread_.get_id() != std::this_thread::get_id()) thread_.join();
  }

  // ---- job side -----------------------------------------------------------

  /// Publishes a query and blocks until it is answered or the session closes.
  Relation ask(SampleId s, SampleId t, QueryKind kind) {
    std::unique_lock lock(mu_);
    if (closed_) throw OracleUnavailable("session closed");
    PendingQuery q{++next_query_, s, t, kind};
    pending_ = q;
    cv_.notify_all();
    cv_.wait(lock, [&] { return closed_ || answered_.count(q.id); });
    if (!answered_.count(q.id)) throw OracleUnavailable("session closed while waiting for an answer");
    return answered_.at(q.id).value;
  }

  void publish_status(const Clustering& c, const MetricsSnapshot& snap) {
    std::map<std::size_t, std::size_t> hist;
    for (const auto& [id, m] : c.clusters()) ++hist[m.size()];
    Json h = Json::array();
    for (const auto& [size, count] : hist) h.push_back({{"size", size}, {"count", count}});
    Json st{{"queries_used", snap.queries_used}, {"k", snap.k}, {"size_histogram", h}};
    if (snap.report) {
      st["nmi"] = snap.report->nmi;
      st["ari"] = snap.report->ari;
      st["purity"] = snap.report->purity;
      st["upsilon"] = snap.report->fission_rate;
      if (snap.report->entropy_ratio) st["r"] = *snap.report->entropy_ratio;
    }
    std::lock_guard lock(mu_);
    status_ = std::move(st);
  }

  /// Keeps the query count current between clustering changes.
  void note_queries(std::size_t used) {
    std::lock_guard lock(mu_);
    status_["queries_used"] = used;
  }

  void append_log(const std::string& line) {
    std::lock_guard lock(mu_);
    log_.push_back(line);
  }

  /// Seeds the contradiction check with answers recovered from a log.
  void preload(const std::vector<RecordedAnswer>& answers) {
    std::lock_guard lock(mu_);
    for (const auto& a : answers) {
      if (mirror_.query_state(a.s, a.t) == Relation::Unknown) mirror_.add_constraint(a.s, a.t, a.value);
      direct_.insert(key(a.s, a.t));
    }
  }

  void set_result(const Clustering& c) {
    std::lock_guard lock(mu_);
    result_ = c;
  }

  // ---- HTTP side ----------------------------------------------------------

  std::optional<PendingQuery> wait_pending(std::chrono::milliseconds wait) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, wait, [&] { return closed_ || pending_.has_value() || state_ != "running"; });
    return pending_;
  }

  Json pending_json(const std::optional<PendingQuery>& q) const {
    if (!q) return nullptr;
    std::lock_guard lock(mu_);
    Json j{{"query_id", q->id},
           {"s", q->s},
           {"t", q->t},
           {"context", to_string(q->kind)},
           {"progress", progress_locked()}};
    if (spec_.assets) {
      j["assets"] = {(*spec_.assets)[q->s], (*spec_.assets)[q->t]};
    } else if (!spec_.coords.empty()) {
      j["coords"] = {{spec_.coords[q->s][0], spec_.coords[q->s][1]}, {spec_.coords[q->t][0], spec_.coords[q->t][1]}};
    }
    return j;
  }

  AnswerOutcome answer(std::uint64_t query_id, Relation verdict) {
    std::unique_lock lock(mu_);
    if (auto it = answered_.find(query_id); it != answered_.end()) {
      if (it->second.value == verdict) return {200, Json{{"status", "duplicate"}, {"progress", progress_locked()}}};
      return {422, Json{{"error", "contradiction"},
                        {"message", "query was already answered with the opposite verdict"},
                        {"conflict", conflict_json(it->second.s, it->second.t, it->second.value, "answered")}}};
    }
    if (!pending_ || pending_->id != query_id)
      return {409, Json{{"error", "stale"}, {"message", "query id is not pending"}}};
    const PendingQuery q = *pending_;
    const Relation known = mirror_.query_state(q.s, q.t);
    if (known != Relation::Unknown && known != verdict) {
      const bool direct = direct_.count(key(q.s, q.t)) != 0;
      return {422, Json{{"error", "contradiction"},
                        {"message", "answer contradicts constraints implied by earlier answers"},
                        {"conflict", conflict_json(q.s, q.t, known, direct ? "answered" : "inferred")}}};
    }
    if (known == Relation::Unknown) mirror_.add_constraint(q.s, q.t, verdict);
    direct_.insert(key(q.s, q.t));
    answered_[query_id] = {q.s, q.t, verdict};
    pending_.reset();
    ++answers_;
    lock.unlock();
    cv_.notify_all();
    lock.lock();
    return {200, Json{{"status", "accepted"}, {"progress", progress_locked()}}};
  }

  Json status() const {
    std::lock_guard lock(mu_);
    Json s = status_;
    s["state"] = state_;
    if (!error_.empty()) s["error"] = error_;
    s["answers"] = answers_;
    s["budget"] = spec_.budget;
    return s;
  }

  std::vector<std::string> log_tail(std::size_t n) const {
    std::lock_guard lock(mu_);
    const std::size_t start = log_.size() > n ? log_.size() - n : 0;
    return {log_.begin() + static_cast<std::ptrdiff_t>(start), log_.end()};
  }

  std::string state() const {
    std::lock_guard lock(mu_);
    return state_;
  }

  std::optional<Clustering> result() const {
    std::lock_guard lock(mu_);
    return result_;
  }

  /// Blocks until the job leaves the running state.
  void wait_done() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return state_ != "running"; });
  }

 private:
  struct Answer {
    SampleId s;
    SampleId t;
    Relation value;
  };

  static std::pair<SampleId, SampleId> key(SampleId s, SampleId t) { return {std::min(s, t), std::max(s, t)}; }

  static Json conflict_json(SampleId s, SampleId t, Relation r, const char* source) {
    return Json{{"s", std::min(s, t)}, {"t", std::max(s, t)}, {"relation", verdict_name(r)}, {"source", source}};
  }

  Json progress_locked() const {
    return Json{{"answers", answers_}, {"budget", spec_.budget}, {"queries_used", status_["queries_used"]},
                {"k", status_["k"]}};
  }

  void set_state(const std::string& s, const std::string& err) {
    {
      std::lock_guard lock(mu_);
      state_ = s;
      error_ = err;
      pending_.reset();
    }
    cv_.notify_all();
  }

  std::string id_;
  Spec spec_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::thread thread_;
  bool closed_ = false;
  std::string state_ = "running";
  std::string error_;
  std::optional<PendingQuery> pending_;
  std::uint64_t next_query_ = 0;
  std::map<std::uint64_t, Answer> answered_;
  std::set<std::pair<SampleId, SampleId>> direct_;
  ConstraintStore mirror_;
  std::size_t answers_ = 0;
  Json status_;
  std::vector<std::string> log_;
  std::optional<Clustering> result_;
};

/// Oracle whose answers come from a session's human annotator.
class InteractiveOracle : public Oracle {
 public:
  explicit InteractiveOracle(Session& s) : session_(&s) {}
  Relation answer(SampleId s, SampleId t, QueryKind kind) override { return session_->ask(s, t, kind); }

 private:
  Session* session_;
};

/// Session running the full engine on an in-memory dataset. When
/// `output_dir` is set the usual run outputs are written there, and with
/// `resume` the answers already in its constraints.log are replayed first.
inline Session::Spec engine_session(std::shared_ptr<const Dataset> data, SessionConfig config, bool resume = false) {
  data->validate();
  config.validate();
  Session::Spec spec;
  spec.n = data->size();
  spec.budget = config.budget + config.refine_budget;
  spec.assets = data->assets;
  if (!data->assets) spec.coords = pca_2d(data->features);
  spec.job = [data, config, resume](Session& session) {
    const auto model = prepare_model(*data, config);
    InteractiveOracle live(session);
    std::vector<RecordedAnswer> recorded;
    const std::string log_path = config.output_dir + "/constraints.log";
    if (resume && !config.output_dir.empty() && std::filesystem::exists(log_path)) {
      std::ifstream in(log_path);
      recorded = read_constraint_log(in);
      session.preload(recorded);
    }
    ReplayOracle oracle(std::move(recorded), &live);
    Engine engine(*data, model, config, oracle);
    engine.log().add_observer([&](const Json& ev) { session.append_log(ev.dump()); });
    engine.set_change_observer([&](const Clustering& c, const MetricsSnapshot& s) { session.publish_status(c, s); });
    engine.broker().add_listener([&](const QueryRecord& r) { session.note_queries(r.index); });
    std::ofstream clog;
    if (!config.output_dir.empty()) {
      // Replayed answers are logged again, so the file is rewritten.
      clog.open(log_path, std::ios::trunc);
      if (!clog) throw IoError("cannot open '" + log_path + "' for writing");
      engine.set_constraint_log(&clog);
    }
    engine.run();
    if (config.refine_budget > 0) engine.refine_outliers(config.refine_budget);
    session.set_result(engine.clustering());
    if (!config.output_dir.empty()) {
      write_assignment(config.output_dir + "/assignment.txt", engine.clustering());
      write_text(config.output_dir + "/runlog.jsonl", engine.log().text());
      write_metrics_csv(config.output_dir + "/metrics.csv", engine.series());
    }
  };
  return spec;
}

/// Reads a session config object: {"data": path, "labels": path, "assets":
/// path, "budget", "batch", "neighbors", "tau", "knn_agg", "seed", "init",
/// "refine_budget", "out", "resume"}. Only "data" is required.
inline SessionConfig session_config_from_json(const Json& j) {
  SessionConfig c;
  if (j.contains("budget")) c.budget = j.at("budget").get<std::size_t>();
  if (j.contains("batch")) c.batch = j.at("batch").get<std::size_t>();
  if (j.contains("neighbors")) c.neighbors = j.at("neighbors").get<std::size_t>();
  if (j.contains("tau") && j.at("tau").is_number()) c.tau = j.at("tau").get<double>();
  if (j.contains("knn_agg")) c.kappa = j.at("knn_agg").get<std::size_t>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("init")) c.init.method = init_method_from_string(j.at("init").get<std::string>());
  if (j.contains("refine_budget")) c.refine_budget = j.at("refine_budget").get<std::size_t>();
  if (j.contains("out")) c.output_dir = j.at("out").get<std::string>();
  c.oracle = OracleMode::Interactive;
  c.validate();
  return c;
}

inline Session::Spec file_session(const Json& j) {
  if (!j.contains("data")) throw ConfigError("session config needs a \"data\" path");
  auto opt = [&](const char* k) -> std::optional<std::string> {
    if (j.contains(k) && j.at(k).is_string() && j.at(k).get<std::string>() != "none") return j.at(k).get<std::string>();
    return std::nullopt;
  };
  auto data = std::make_shared<Dataset>(load_dataset(j.at("data").get<std::string>(), opt("labels"), opt("assets")));
  const bool resume = j.contains("resume") && j.at("resume").get<bool>();
  return engine_session(std::move(data), session_config_from_json(j), resume);
}

class OracleService {
 public:
  using Factory = std::function<Session::Spec(const Json&)>;

  explicit OracleService(Factory factory = file_session) : factory_(std::move(factory)) { routes(); }

  ~OracleService() {
    stop();
    std::lock_guard lock(mu_);
    sessions_.clear();
  }

  /// Creates and starts a session directly (no HTTP round trip).
  std::string create(const Json& config) { return add(factory_(config)); }

  std::string add(Session::Spec spec) {
    std::lock_guard lock(mu_);
    const std::string id = "s" + std::to_string(++next_id_);
    auto s = std::make_shared<Session>(id, std::move(spec));
    sessions_[id] = s;
    s->start();
    return id;
  }

  std::shared_ptr<Session> find(const std::string& id) {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
  }

  bool remove(const std::string& id) {
    std::shared_ptr<Session> s;
    {
      std::lock_guard lock(mu_);
      auto it = sessions_.find(id);
      if (it == sessions_.end()) return false;
      s = it->second;
      sessions_.erase(it);
    }
    s->close();
    return true;
  }

  httplib::Server& server() { return server_; }

  int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  static void reply(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  void routes() {
    server_.Post("/session", [this](const httplib::Request& req, httplib::Response& res) {
      Json cfg;
      try {
        cfg = req.body.empty() ? Json::object() : Json::parse(req.body);
      } catch (const std::exception&) {
        return reply(res, 400, {{"error", "malformed JSON"}});
      }
      try {
        reply(res, 201, {{"id", create(cfg)}});
      } catch (const ConfigError& e) {
        reply(res, 400, {{"error", e.what()}});
      } catch (const std::exception& e) {
        reply(res, 500, {{"error", e.what()}});
      }
    });
    server_.Delete(R"(/session/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (!remove(req.matches[1])) return reply(res, 404, {{"error", "unknown session"}});
      reply(res, 200, {{"status", "deleted"}});
    });
    server_.Get(R"(/session/([^/]+)/pending)", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req.matches[1]);
      if (!s) return reply(res, 404, {{"error", "unknown session"}});
      long wait = 0;
      if (req.has_param("wait")) wait = std::clamp(std::atol(req.get_param_value("wait").c_str()), 0L, 30000L);
      const auto q = s->wait_pending(std::chrono::milliseconds(wait));
      reply(res, 200, {{"pending", s->pending_json(q)}, {"state", s->state()}});
    });
    server_.Post(R"(/session/([^/]+)/answer)", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req.matches[1]);
      if (!s) return reply(res, 404, {{"error", "unknown session"}});
      Json body;
      try {
        body = Json::parse(req.body);
      } catch (const std::exception&) {
        return reply(res, 400, {{"error", "malformed JSON"}});
      }
      if (!body.is_object() || !body.contains("query_id") || !body["query_id"].is_number_unsigned() ||
          !body.contains("verdict") || !body["verdict"].is_string())
        return reply(res, 400, {{"error", "expected {query_id, verdict}"}});
      const Relation v = verdict_from_string(body["verdict"].get<std::string>());
      if (v == Relation::Unknown) return reply(res, 400, {{"error", "verdict must be \"must\" or \"cannot\""}});
      const auto outcome = s->answer(body["query_id"].get<std::uint64_t>(), v);
      reply(res, outcome.status, outcome.body);
    });
    server_.Get(R"(/session/([^/]+)/status)", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req.matches[1]);
      if (!s) return reply(res, 404, {{"error", "unknown session"}});
      reply(res, 200, s->status());
    });
    server_.Get(R"(/session/([^/]+)/log)", [this](const httplib::Request& req, httplib::Response& res) {
      auto s = find(req.matches[1]);
      if (!s) return reply(res, 404, {{"error", "unknown session"}});
      std::size_t n = 100;
      if (req.has_param("n")) n = static_cast<std::size_t>(std::max(0L, std::atol(req.get_param_value("n").c_str())));
      Json lines = Json::array();
      for (const auto& l : s->log_tail(n)) lines.push_back(Json::parse(l));
      reply(res, 200, {{"events", lines}});
    });
  }

  Factory factory_;
  httplib::Server server_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 0;
};

}  // namespace a3s
