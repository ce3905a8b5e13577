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

// a3s command line: batch runs, the annotation service, and blob generation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "a3s/a3s.hpp"

namespace fs = std::filesystem;
using namespace a3s;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kContradiction = 3, kIo = 4 };

struct RunArgs {
  std::string data;
  std::string labels = "none";
  std::string assets = "none";
  std::string oracle = "simulated";
  std::string init = "probabilistic";
  std::size_t budget = 600;
  std::size_t batch = kDefaultBatch;
  std::size_t neighbors = kDefaultNeighbors;
  std::string tau = "auto";
  std::size_t knn_agg = kDefaultKappa;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t refine_budget = 0;
  std::optional<std::size_t> max_iterations;
  bool resume = false;
  std::string host = "127.0.0.1";
  int port = 8080;
};

std::optional<std::string> optional_path(const std::string& s) {
  if (s.empty() || s == "none") return std::nullopt;
  return s;
}

SessionConfig make_config(const RunArgs& a) {
  SessionConfig c;
  c.budget = a.budget;
  c.batch = a.batch;
  c.neighbors = a.neighbors;
  c.kappa = a.knn_agg;
  c.seed = a.seed;
  if (const char* env = std::getenv("A3S_SEED"); env && *env) {
    try {
      c.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("A3S_SEED is not an unsigned integer: '") + env + "'");
    }
  }
  if (a.tau != "auto") {
    try {
      c.tau = std::stod(a.tau);
    } catch (const std::exception&) {
      throw ConfigError("--tau must be a number or 'auto'");
    }
  }
  c.init.method = init_method_from_string(a.init);
  c.max_iterations = a.max_iterations;
  c.refine_budget = a.refine_budget;
  c.output_dir = a.out;
  if (a.oracle == "simulated")
    c.oracle = OracleMode::Simulated;
  else if (a.oracle == "interactive")
    c.oracle = OracleMode::Interactive;
  else
    throw ConfigError("--oracle must be 'simulated' or 'interactive'");
  c.validate();
  return c;
}

Json metrics_json(const Clustering& c, const Dataset& d) {
  Json j{{"k", c.cluster_count()}};
  if (!d.has_labels()) return j;
  const auto r = evaluate(c, Clustering::from_labels(*d.labels));
  j["nmi"] = r.nmi;
  j["ari"] = r.ari;
  j["purity"] = r.purity;
  j["upsilon"] = r.fission_rate;
  if (r.entropy_ratio) j["r"] = *r.entropy_ratio;
  return j;
}

int run_simulated(const RunArgs& a, const SessionConfig& config, const Dataset& data) {
  if (!data.has_labels()) throw ConfigError("the simulated oracle needs --labels");
  const fs::path out(config.output_dir);
  const auto model = prepare_model(data, config);
  SimulatedOracle simulated(*data.labels);
  std::vector<RecordedAnswer> recorded;
  if (a.resume && fs::exists(out / "constraints.log")) {
    std::ifstream in(out / "constraints.log");
    recorded = read_constraint_log(in);
  }
  ReplayOracle oracle(recorded, &simulated);
  Engine engine(data, model, config, oracle);

  std::ofstream runlog(out / "runlog.jsonl", std::ios::trunc);
  std::ofstream clog(out / "constraints.log", std::ios::trunc);
  if (!runlog || !clog) throw IoError("cannot write run outputs under '" + out.string() + "'");
  engine.log().set_sink(&runlog);
  engine.set_constraint_log(&clog);

  auto result = engine.run();
  std::size_t refined = 0;
  if (config.refine_budget > 0) refined = engine.refine_outliers(config.refine_budget);

  write_assignment((out / "assignment.txt").string(), engine.clustering());
  write_metrics_csv((out / "metrics.csv").string(), engine.series());
  Json summary{{"samples", data.size()},
               {"seed", config.seed},
               {"initial_k", result.initial_k},
               {"tau", result.tau},
               {"iterations", result.iterations},
               {"stop_reason", result.stop_reason},
               {"queries_used", engine.broker().used()},
               {"refinement_queries", refined},
               {"replayed_answers", recorded.size()},
               {"initial", metrics_json(result.initial, data)},
               {"final", metrics_json(engine.clustering(), data)}};
  write_text((out / "summary.json").string(), summary.dump(2) + "\n");
  std::cout << summary.dump() << "\n";
  return kOk;
}

int run_interactive(const RunArgs& a, const SessionConfig& config, std::shared_ptr<const Dataset> data) {
  OracleService service;
  if (!service.bind(a.host, a.port)) throw IoError("cannot bind " + a.host + ":" + std::to_string(a.port));
  std::thread server([&] { service.listen_after_bind(); });
  const std::string id = service.add(engine_session(data, config, a.resume));
  std::cerr << "session " << id << " at http://" << a.host << ":" << a.port << "/session/" << id << "\n";
  auto session = service.find(id);
  session->wait_done();
  const Json status = session->status();
  service.stop();
  server.join();
  if (status["state"] != "finished") {
    std::cerr << "a3s: session ended: " << status.value("error", std::string("unknown")) << "\n";
    return kFailure;
  }
  Json summary{{"samples", data->size()}, {"seed", config.seed}, {"answers", status["answers"]},
               {"final", metrics_json(*session->result(), *data)}};
  write_text((fs::path(config.output_dir) / "summary.json").string(), summary.dump(2) + "\n");
  std::cout << summary.dump() << "\n";
  return kOk;
}

int cmd_run(const RunArgs& a) {
  const auto config = make_config(a);
  if (config.output_dir.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(config.output_dir, ec);
  if (ec) throw IoError("cannot create '" + config.output_dir + "': " + ec.message());
  auto data = std::make_shared<Dataset>(load_dataset(a.data, optional_path(a.labels), optional_path(a.assets)));
  if (config.oracle == OracleMode::Interactive) return run_interactive(a, config, data);
  return run_simulated(a, config, *data);
}

int cmd_serve(const std::string& host, int port) {
  OracleService service;
  if (!service.bind(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  std::cerr << "listening on http://" << host << ":" << port << "\n";
  service.listen_after_bind();
  return kOk;
}

int cmd_gen(const BlobSpec& spec, const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create '" + out + "': " + ec.message());
  const auto d = make_blobs(spec);
  write_npy((fs::path(out) / "features.npy").string(), d.features);
  write_labels((fs::path(out) / "labels.txt").string(), *d.labels);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active clustering with pairwise oracle queries"};
  app.require_subcommand(1);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Cluster a dataset, spending oracle queries");
  run->add_option("--data", ra.data, "Feature matrix (.npy or delimited text)")->required();
  run->add_option("--labels", ra.labels, "Ground-truth labels, one per line, or 'none'");
  run->add_option("--assets", ra.assets, "Asset paths shown to human annotators, or 'none'");
  run->add_option("--oracle", ra.oracle, "simulated|interactive");
  run->add_option("--init", ra.init, "probabilistic|kmeans|agglomerative");
  run->add_option("--budget", ra.budget, "Oracle query budget");
  run->add_option("--batch", ra.batch, "Candidate batch size")->check(CLI::PositiveNumber);
  run->add_option("--neighbors", ra.neighbors, "Neighbors per sample")->check(CLI::PositiveNumber);
  run->add_option("--tau", ra.tau, "Density threshold or 'auto'");
  run->add_option("--knn-agg", ra.knn_agg, "Nearest members per side in cluster scoring; 0 uses all pairs");
  run->add_option("--seed", ra.seed, "Random seed (A3S_SEED overrides)");
  run->add_option("--out", ra.out, "Output directory")->required();
  run->add_option("--refine-budget", ra.refine_budget, "Extra queries for singleton refinement");
  run->add_option("--max-iterations", ra.max_iterations, "Iteration cap (default 4x initial cluster count)");
  run->add_flag("--resume", ra.resume, "Replay oracle answers from <out>/constraints.log first");
  run->add_option("--host", ra.host, "Interactive mode: bind address");
  run->add_option("--port", ra.port, "Interactive mode: port");

  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  auto* serve = app.add_subcommand("serve", "Serve annotation sessions over HTTP");
  serve->add_option("--host", serve_host, "Bind address");
  serve->add_option("--port", serve_port, "Port");

  BlobSpec blob;
  std::string gen_out;
  auto* gen = app.add_subcommand("gen", "Write a synthetic Gaussian-blob dataset");
  gen->add_option("--n", blob.n, "Samples");
  gen->add_option("--k", blob.k, "Classes");
  gen->add_option("--dims", blob.dims, "Dimensions");
  gen->add_option("--spread", blob.spread, "Per-axis standard deviation");
  gen->add_option("--box", blob.box, "Centers drawn uniformly in [-box, box]^dims");
  gen->add_option("--noise", blob.noise_fraction, "Share of noisy samples");
  gen->add_option("--noise-scale", blob.noise_scale, "Spread multiplier for noisy samples");
  gen->add_option("--seed", blob.seed, "Random seed");
  gen->add_option("--out", gen_out, "Output directory (features.npy, labels.txt)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*run) return cmd_run(ra);
    if (*serve) return cmd_serve(serve_host, serve_port);
    if (*gen) return cmd_gen(blob, gen_out);
  } catch (const ConfigError& e) {
    std::cerr << "a3s: configuration error: " << e.what() << "\n";
    return kConfig;
  } catch (const ContradictionError& e) {
    std::cerr << "a3s: oracle contradiction: " << e.what() << "\n";
    return kContradiction;
  } catch (const IoError& e) {
    std::cerr << "a3s: I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "a3s: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
