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

// Calibrated pairwise same-class probabilities.
//
// Pipeline: seeded k-means pseudo labels -> kNN sample pairs labeled by
// pseudo-label agreement -> non-increasing isotonic fit of target vs distance
// -> sparse store holding P(same class) for every kNN pair. Multi-view data
// fuses per-view predictions with the product ratio.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "a3s/core.hpp"

namespace a3s {

inline constexpr double kDefaultEpsilon = 1e-4;
inline constexpr std::size_t kDefaultNeighbors = 50;

inline double clip_probability(double p, double eps) { return std::clamp(p, eps, 1.0 - eps); }

inline double logit(double p) { return std::log(p) - std::log1p(-p); }

/// Numerically stable logistic function.
inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Uniform double in [0, 1) from the top 53 bits; independent of the
/// standard library's distribution implementations.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------
// k-means
// ---------------------------------------------------------------------------

struct KMeansResult {
  std::vector<std::uint32_t> labels;
  Matrix centers;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Ties go to the lower center
/// index; empty clusters are reseeded with the worst-fitting sample.
inline KMeansResult kmeans(const Matrix& x, std::size_t k, std::uint64_t seed,
                           std::size_t max_iterations = 100) {
  const std::size_t n = x.rows;
  const std::size_t dim = x.cols;
  if (k == 0 || k > n) throw ConfigError("k-means cluster count must lie in [1, N]");

  auto sqdist = [&](std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = a[d] - b[d];
      acc += diff * diff;
    }
    return acc;
  };

  std::mt19937_64 rng(seed);
  KMeansResult out;
  out.centers = Matrix(k, dim);
  std::vector<char> chosen(n, 0);
  std::vector<double> best(n, std::numeric_limits<double>::infinity());

  auto take = [&](std::size_t c, std::size_t s) {
    chosen[s] = 1;
    std::copy(x.row(s).begin(), x.row(s).end(), out.centers.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) best[i] = std::min(best[i], sqdist(x.row(i), x.row(s)));
  };

  take(0, static_cast<std::size_t>(rng() % n));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += best[i];
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        acc += best[i];
        if (best[i] > 0.0 && acc > target) {
          pick = i;
          break;
        }
      }
      if (pick == n) {
        for (std::size_t i = n; i-- > 0;)
          if (best[i] > 0.0) {
            pick = i;
            break;
          }
      }
    } else {
      for (std::size_t i = 0; i < n; ++i)
        if (!chosen[i]) {
          pick = i;
          break;
        }
    }
    take(c, pick);
  }

  out.labels.assign(n, 0);
  std::vector<double> fit(n, 0.0);
  std::vector<std::uint32_t> previous;
  for (std::size_t it = 0; it < max_iterations; ++it) {
    std::size_t changed = 0;
    parallel_for(n, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        std::uint32_t arg = 0;
        double bd = sqdist(x.row(i), out.centers.row(0));
        for (std::size_t c = 1; c < k; ++c) {
          const double d = sqdist(x.row(i), out.centers.row(c));
          if (d < bd) {
            bd = d;
            arg = static_cast<std::uint32_t>(c);
          }
        }
        out.labels[i] = arg;
        fit[i] = bd;
      }
    });
    if (it > 0) {
      for (std::size_t i = 0; i < n; ++i) changed += previous[i] != out.labels[i];
    } else {
      changed = n;
    }
    previous = out.labels;
    out.iterations = it + 1;

    Matrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = sums.row(out.labels[i]);
      const auto xi = x.row(i);
      for (std::size_t d = 0; d < dim; ++d) row[d] += xi[d];
      ++counts[out.labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        std::size_t worst = 0;
        for (std::size_t i = 1; i < n; ++i)
          if (fit[i] > fit[worst]) worst = i;
        std::copy(x.row(worst).begin(), x.row(worst).end(), out.centers.row(c).begin());
        fit[worst] = 0.0;
        changed = std::max<std::size_t>(changed, 1);
        continue;
      }
      auto center = out.centers.row(c);
      const auto s = sums.row(c);
      for (std::size_t d = 0; d < dim; ++d) center[d] = s[d] / static_cast<double>(counts[c]);
    }
    if (changed == 0) break;
  }
  return out;
}

/// round(sqrt(N)), at least 1.
inline std::size_t default_pseudo_k(std::size_t n) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n)))));
}

inline std::vector<std::uint32_t> generate_pseudo_labels(const Matrix& x, std::size_t k,
                                                         std::uint64_t seed) {
  if (k < 1 || k > x.rows) throw ConfigError("pseudo-label count must lie in [1, N]");
  return kmeans(x, k, seed).labels;
}

inline std::vector<std::uint32_t> generate_pseudo_labels(const Dataset& data, std::size_t k,
                                                         std::uint64_t seed) {
  return generate_pseudo_labels(data.features, k, seed);
}

// ---------------------------------------------------------------------------
// Isotonic regression
// ---------------------------------------------------------------------------

struct TrainingPair {
  double distance;
  double target;
};

/// One record per unordered kNN pair; target 1 iff the pseudo labels agree.
inline std::vector<TrainingPair> build_training_pairs(const NeighborGraph& graph,
                                                      std::span<const std::uint32_t> pseudo) {
  if (graph.size() != pseudo.size()) throw ConfigError("graph and pseudo labels differ in size");
  struct Edge {
    SampleId a, b;
    double d;
  };
  std::vector<Edge> edges;
  for (SampleId i = 0; i < graph.size(); ++i)
    for (const auto& nb : graph[i]) edges.push_back({std::min(i, nb.id), std::max(i, nb.id), nb.distance});
  std::sort(edges.begin(), edges.end(),
            [](const Edge& l, const Edge& r) { return l.a < r.a || (l.a == r.a && l.b < r.b); });
  edges.erase(std::unique(edges.begin(), edges.end(),
                          [](const Edge& l, const Edge& r) { return l.a == r.a && l.b == r.b; }),
              edges.end());
  std::vector<TrainingPair> out;
  out.reserve(edges.size());
  for (const auto& e : edges) out.push_back({e.d, pseudo[e.a] == pseudo[e.b] ? 1.0 : 0.0});
  return out;
}

/// Piecewise-linear non-increasing map from distance to probability.
class IsotonicModel {
 public:
  IsotonicModel() = default;
  IsotonicModel(std::vector<double> knots, std::vector<double> values)
      : knots_(std::move(knots)), values_(std::move(values)) {
    if (knots_.empty() || knots_.size() != values_.size())
      throw ConfigError("isotonic model needs matching, non-empty knots and values");
    for (std::size_t i = 1; i < knots_.size(); ++i) {
      if (!(knots_[i] > knots_[i - 1])) throw ConfigError("isotonic knots must be strictly increasing");
      if (values_[i] > values_[i - 1]) throw ConfigError("isotonic values must be non-increasing");
    }
  }

  const std::vector<double>& knots() const { return knots_; }
  const std::vector<double>& values() const { return values_; }

  double predict(double d) const {
    if (d < 0.0 || std::isnan(d)) throw ConfigError("distance must be non-negative");
    if (d <= knots_.front()) return values_.front();
    if (d >= knots_.back()) return values_.back();
    const auto it = std::upper_bound(knots_.begin(), knots_.end(), d);
    const std::size_t hi = static_cast<std::size_t>(it - knots_.begin());
    const std::size_t lo = hi - 1;
    const double w = (d - knots_[lo]) / (knots_[hi] - knots_[lo]);
    return values_[lo] + w * (values_[hi] - values_[lo]);
  }

  /// Two columns per line: knot distance, probability.
  void save(std::ostream& os) const {
    os << std::setprecision(17);
    for (std::size_t i = 0; i < knots_.size(); ++i) os << knots_[i] << ' ' << values_[i] << '\n';
  }

  static IsotonicModel load(std::istream& is) {
    std::vector<double> k, v;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream row(line);
      double a = 0, b = 0;
      if (!(row >> a >> b)) throw IoError("malformed isotonic model line: " + line);
      k.push_back(a);
      v.push_back(b);
    }
    return IsotonicModel(std::move(k), std::move(v));
  }

 private:
  std::vector<double> knots_;
  std::vector<double> values_;
};

inline double predict_pair_probability(const IsotonicModel& model, double d) { return model.predict(d); }

/// Least-squares non-increasing fit via pool-adjacent-violators. Equal
/// distances are pooled first; each block contributes its end points as
/// knots so predictions are flat inside a block and linear between blocks.
inline IsotonicModel fit_isotonic(std::vector<TrainingPair> pairs, double eps) {
  if (pairs.empty()) throw ConfigError("isotonic fit needs at least one training pair");
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("epsilon must lie in (0, 0.5)");
  std::sort(pairs.begin(), pairs.end(),
            [](const TrainingPair& a, const TrainingPair& b) { return a.distance < b.distance; });

  struct Block {
    double weight;
    double sum;
    double left;
    double right;
    double mean() const { return sum / weight; }
  };
  std::vector<Block> blocks;
  blocks.reserve(pairs.size());
  for (std::size_t i = 0; i < pairs.size();) {
    Block b{0.0, 0.0, pairs[i].distance, pairs[i].distance};
    std::size_t j = i;
    for (; j < pairs.size() && pairs[j].distance == pairs[i].distance; ++j) {
      b.weight += 1.0;
      b.sum += pairs[j].target;
    }
    i = j;
    blocks.push_back(b);
    while (blocks.size() >= 2) {
      auto& prev = blocks[blocks.size() - 2];
      const auto& cur = blocks.back();
      if (prev.mean() >= cur.mean()) break;
      prev.weight += cur.weight;
      prev.sum += cur.sum;
      prev.right = cur.right;
      blocks.pop_back();
    }
  }

  std::vector<double> knots, values;
  for (const auto& b : blocks) {
    const double v = clip_probability(b.mean(), eps);
    knots.push_back(b.left);
    values.push_back(v);
    if (b.right > b.left) {
      knots.push_back(b.right);
      values.push_back(v);
    }
  }
  return IsotonicModel(std::move(knots), std::move(values));
}

// ---------------------------------------------------------------------------
// View fusion
// ---------------------------------------------------------------------------

/// prod p / (prod p + prod (1 - p)), evaluated in the log domain.
inline double fuse_views(std::span<const double> probs, double eps = kDefaultEpsilon) {
  if (probs.empty()) throw ConfigError("fusion needs at least one view");
  double log_odds = 0.0;
  for (double p : probs) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("view probabilities must lie in (0, 1)");
    log_odds += logit(p);
  }
  if (probs.size() == 1) return clip_probability(probs[0], eps);
  return clip_probability(sigmoid(log_odds), eps);
}

// ---------------------------------------------------------------------------
// Probability store
// ---------------------------------------------------------------------------

/// Sparse symmetric map from kNN sample pairs to P(same class). Pairs outside
/// the graph read as the default probability (epsilon).
class PairProbabilityStore {
 public:
  struct Entry {
    SampleId id;
    double probability;
    double log_odds;
  };

  PairProbabilityStore() = default;
  PairProbabilityStore(std::size_t n, double eps) : eps_(eps), adjacency_(n) {
    if (!(eps > 0.0 && eps < 0.5)) throw ConfigError("epsilon must lie in (0, 0.5)");
  }

  std::size_t size() const { return adjacency_.size(); }
  double epsilon() const { return eps_; }
  double default_probability() const { return eps_; }
  double default_log_odds() const { return logit(eps_); }

  /// Inserts or overwrites a pair; call finalize() once all pairs are in.
  void set(SampleId s, SampleId t, double p) {
    if (s == t) throw ConfigError("pair probability needs two distinct samples");
    pending_.push_back({std::min(s, t), std::max(s, t), clip_probability(p, eps_)});
  }

  void finalize() {
    std::stable_sort(pending_.begin(), pending_.end(), [](const Raw& a, const Raw& b) {
      return a.s < b.s || (a.s == b.s && a.t < b.t);
    });
    // Last write wins for duplicates.
    std::vector<Raw> unique;
    for (std::size_t i = 0; i < pending_.size(); ++i) {
      if (i + 1 < pending_.size() && pending_[i + 1].s == pending_[i].s && pending_[i + 1].t == pending_[i].t)
        continue;
      unique.push_back(pending_[i]);
    }
    pending_.clear();
    for (const auto& r : unique) {
      insert_sorted(r.s, {r.t, r.p, logit(r.p)});
      insert_sorted(r.t, {r.s, r.p, logit(r.p)});
    }
    entries_ = 0;
    for (const auto& a : adjacency_) entries_ += a.size();
    entries_ /= 2;
  }

  const Entry* find(SampleId s, SampleId t) const {
    const auto& a = adjacency_[s].size() <= adjacency_[t].size() ? adjacency_[s] : adjacency_[t];
    const SampleId other = adjacency_[s].size() <= adjacency_[t].size() ? t : s;
    auto it = std::lower_bound(a.begin(), a.end(), other,
                               [](const Entry& e, SampleId id) { return e.id < id; });
    if (it == a.end() || it->id != other) return nullptr;
    return &*it;
  }

  bool contains(SampleId s, SampleId t) const { return s != t && find(s, t) != nullptr; }

  double probability(SampleId s, SampleId t) const {
    if (s == t) return 1.0 - eps_;
    const auto* e = find(s, t);
    return e ? e->probability : eps_;
  }

  double log_odds(SampleId s, SampleId t) const {
    if (s == t) return logit(1.0 - eps_);
    const auto* e = find(s, t);
    return e ? e->log_odds : logit(eps_);
  }

  /// Stored partners of s, ascending by id.
  std::span<const Entry> neighbors(SampleId s) const { return adjacency_[s]; }

  std::size_t entry_count() const { return entries_; }

 private:
  struct Raw {
    SampleId s, t;
    double p;
  };

  void insert_sorted(SampleId s, Entry e) {
    auto& a = adjacency_[s];
    if (a.empty() || a.back().id < e.id) {
      a.push_back(e);
      return;
    }
    auto it = std::lower_bound(a.begin(), a.end(), e.id, [](const Entry& x, SampleId id) { return x.id < id; });
    if (it != a.end() && it->id == e.id)
      *it = e;
    else
      a.insert(it, e);
  }

  double eps_ = kDefaultEpsilon;
  std::vector<std::vector<Entry>> adjacency_;
  std::vector<Raw> pending_;
  std::size_t entries_ = 0;
};

/// One calibrated model per view (a single model when the dataset has no views).
struct PairwiseOptions {
  std::size_t neighbors = kDefaultNeighbors;
  std::size_t pseudo_k = 0;  // 0 -> round(sqrt(N))
  double epsilon = kDefaultEpsilon;
  std::uint64_t seed = 0;
};

inline IsotonicModel fit_view_model(const Matrix& x, const NeighborGraph& graph, const PairwiseOptions& opt) {
  const std::size_t k = opt.pseudo_k ? opt.pseudo_k : default_pseudo_k(x.rows);
  const auto pseudo = generate_pseudo_labels(x, std::min(k, x.rows), opt.seed);
  return fit_isotonic(build_training_pairs(graph, pseudo), opt.epsilon);
}

inline std::vector<IsotonicModel> fit_pairwise_models(const Dataset& data, const NeighborGraph& graph,
                                                      const PairwiseOptions& opt) {
  std::vector<IsotonicModel> models;
  if (data.views.empty()) {
    models.push_back(fit_view_model(data.features, graph, opt));
    return models;
  }
  for (const auto& view : data.views) {
    const auto view_graph = build_neighbor_graph(view, opt.neighbors);
    models.push_back(fit_view_model(view, view_graph, opt));
  }
  return models;
}

/// Entry for every kNN pair of the graph. With views, the per-view distances
/// are mapped through their own models and fused.
inline PairProbabilityStore build_store(const NeighborGraph& graph, std::span<const IsotonicModel> models,
                                        const Dataset& data, double eps = kDefaultEpsilon) {
  if (models.empty()) throw ConfigError("build_store needs at least one model");
  const bool multi = !data.views.empty();
  if (multi && models.size() != data.views.size())
    throw ConfigError("one isotonic model per view is required");
  PairProbabilityStore store(graph.size(), eps);
  std::vector<double> per_view(models.size());
  for (SampleId i = 0; i < graph.size(); ++i) {
    for (const auto& nb : graph[i]) {
      // Mutual neighbors are written twice with the same value; finalize() dedups.
      double p;
      if (!multi) {
        p = models[0].predict(nb.distance);
      } else {
        for (std::size_t v = 0; v < models.size(); ++v)
          per_view[v] = clip_probability(models[v].predict(distance(data.views[v], i, nb.id)), eps);
        p = fuse_views(per_view, eps);
      }
      store.set(i, nb.id, p);
    }
  }
  store.finalize();
  return store;
}

}  // namespace a3s
