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

#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "a3s/metrics.hpp"
#include "a3s/pairwise.hpp"
#include "a3s/synthetic.hpp"

using namespace a3s;

namespace {

Dataset two_blobs(std::size_t per_blob, double gap, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Dataset d;
  d.features = Matrix(2 * per_blob, 2);
  d.labels = std::vector<std::int64_t>(2 * per_blob);
  for (std::size_t i = 0; i < 2 * per_blob; ++i) {
    const bool second = i >= per_blob;
    d.features(i, 0) = (second ? gap : 0.0) + standard_normal(rng);
    d.features(i, 1) = standard_normal(rng);
    (*d.labels)[i] = second;
  }
  return d;
}

/// Least-squares non-increasing fit by trying every split of the sorted
/// targets into contiguous level sets.
std::vector<double> brute_force_isotonic(const std::vector<double>& y) {
  const std::size_t n = y.size();
  double best_err = INFINITY;
  std::vector<double> best;
  for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
    std::vector<double> fit(n);
    std::size_t start = 0;
    double prev_mean = INFINITY;
    bool ok = true;
    for (std::size_t i = 0; i < n && ok; ++i) {
      const bool cut = i == n - 1 || (mask >> i) & 1u;
      if (!cut) continue;
      double sum = 0;
      for (std::size_t k = start; k <= i; ++k) sum += y[k];
      const double mean = sum / static_cast<double>(i - start + 1);
      if (mean > prev_mean + 1e-15) ok = false;
      for (std::size_t k = start; k <= i; ++k) fit[k] = mean;
      prev_mean = mean;
      start = i + 1;
    }
    if (!ok) continue;
    double err = 0;
    for (std::size_t k = 0; k < n; ++k) err += (fit[k] - y[k]) * (fit[k] - y[k]);
    if (err < best_err - 1e-12) {
      best_err = err;
      best = fit;
    }
  }
  return best;
}

}  // namespace

TEST(KMeans, SeparatedBlobsRecovered) {
  const auto d = two_blobs(50, 40.0, 3);
  const auto pseudo = generate_pseudo_labels(d, 2, 7);
  EXPECT_DOUBLE_EQ(ari(Clustering::from_labels(pseudo), Clustering::from_labels(*d.labels)), 1.0);
}

TEST(KMeans, IdenticalPointsOneCluster) {
  Matrix x(10, 3);
  for (auto& v : x.data) v = 2.5;
  const auto pseudo = generate_pseudo_labels(x, 1, 0);
  for (auto y : pseudo) EXPECT_EQ(y, pseudo[0]);
}

TEST(KMeans, Deterministic) {
  const auto d = make_blobs({300, 6, 4, 1.0, 5.0, 0.0, 3.0, 9});
  EXPECT_EQ(generate_pseudo_labels(d, 17, 5), generate_pseudo_labels(d, 17, 5));
  EXPECT_THROW(generate_pseudo_labels(d, 0, 5), ConfigError);
  EXPECT_THROW(generate_pseudo_labels(d, 301, 5), ConfigError);
}

TEST(KMeans, DefaultPseudoCount) {
  EXPECT_EQ(default_pseudo_k(1000), 32u);
  EXPECT_EQ(default_pseudo_k(2), 1u);
  EXPECT_EQ(default_pseudo_k(1), 1u);
}

TEST(TrainingPairs, TargetsAndDedup) {
  Matrix x(2, 1);
  x(1, 0) = 3.0;
  const auto g = build_neighbor_graph(x, 1);  // 0 lists 1 and 1 lists 0
  const std::vector<std::uint32_t> same{4, 4}, diff{4, 5};
  auto p = build_training_pairs(g, same);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_DOUBLE_EQ(p[0].distance, 3.0);
  EXPECT_DOUBLE_EQ(p[0].target, 1.0);
  p = build_training_pairs(g, diff);
  ASSERT_EQ(p.size(), 1u);
  EXPECT_DOUBLE_EQ(p[0].target, 0.0);
}

TEST(Isotonic, AlreadyMonotone) {
  const auto m = fit_isotonic({{1, 1}, {2, 1}, {3, 0}}, 0.01);
  EXPECT_DOUBLE_EQ(m.predict(1), 0.99);
  EXPECT_DOUBLE_EQ(m.predict(2), 0.99);
  EXPECT_DOUBLE_EQ(m.predict(3), 0.01);
}

TEST(Isotonic, ViolatorsPooled) {
  const auto m = fit_isotonic({{1, 0}, {2, 1}}, 0.01);
  EXPECT_DOUBLE_EQ(m.predict(1), 0.5);
  EXPECT_DOUBLE_EQ(m.predict(2), 0.5);
}

TEST(Isotonic, ConstantTargets) {
  const auto m = fit_isotonic({{1, 1}, {2, 1}, {5, 1}}, 1e-4);
  for (double d : {0.0, 1.0, 3.3, 9.0}) EXPECT_DOUBLE_EQ(m.predict(d), 1.0 - 1e-4);
}

TEST(Isotonic, ClampAndInterpolate) {
  const IsotonicModel m({1.0, 3.0}, {0.8, 0.4});
  EXPECT_DOUBLE_EQ(m.predict(0.2), 0.8);
  EXPECT_DOUBLE_EQ(m.predict(7.0), 0.4);
  EXPECT_NEAR(m.predict(2.0), 0.6, 1e-15);
  EXPECT_THROW(m.predict(-1.0), ConfigError);
  EXPECT_THROW(IsotonicModel({1.0, 1.0}, {0.5, 0.5}), ConfigError);
  EXPECT_THROW(IsotonicModel({1.0, 2.0}, {0.4, 0.5}), ConfigError);
}

TEST(Isotonic, MatchesBruteForceLevelSets) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 400; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    std::vector<TrainingPair> pairs;
    std::vector<double> y;
    for (std::size_t i = 0; i < n; ++i) {
      const double t = static_cast<double>(rng() % 5) / 4.0;  // soft targets exercise pooling
      pairs.push_back({static_cast<double>(i + 1), t});
      y.push_back(t);
    }
    std::shuffle(pairs.begin(), pairs.end(), rng);
    const auto m = fit_isotonic(pairs, 1e-9);
    const auto ref = brute_force_isotonic(y);
    for (std::size_t i = 0; i < n; ++i)
      EXPECT_NEAR(m.predict(static_cast<double>(i + 1)), clip_probability(ref[i], 1e-9), 1e-12);
  }
}

TEST(Isotonic, PredictionsNonIncreasing) {
  std::mt19937_64 rng(8);
  std::vector<TrainingPair> pairs;
  for (int i = 0; i < 500; ++i) pairs.push_back({uniform01(rng) * 10, static_cast<double>(rng() % 2)});
  const auto m = fit_isotonic(pairs, 1e-4);
  double prev = 1.0;
  for (double d = 0; d <= 11; d += 0.01) {
    const double p = m.predict(d);
    EXPECT_LE(p, prev + 1e-15);
    EXPECT_GE(p, 1e-4);
    EXPECT_LE(p, 1 - 1e-4);
    prev = p;
  }
}

TEST(Isotonic, SaveLoadRoundTrip) {
  const auto m = fit_isotonic({{0.5, 1}, {1.5, 1}, {2.0, 0}, {2.5, 1}, {4.0, 0}}, 1e-4);
  std::stringstream ss;
  m.save(ss);
  const auto back = IsotonicModel::load(ss);
  EXPECT_EQ(back.knots(), m.knots());
  EXPECT_EQ(back.values(), m.values());
}

TEST(FuseViews, Examples) {
  const std::vector<double> one{0.7}, neutral{0.5, 0.5}, two{0.8, 0.9};
  EXPECT_DOUBLE_EQ(fuse_views(one), 0.7);
  EXPECT_DOUBLE_EQ(fuse_views(neutral), 0.5);
  EXPECT_NEAR(fuse_views(two), 0.72 / 0.74, 1e-12);
}

TEST(FuseViews, SymmetricWithNeutralElement) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> p{0.01 + 0.98 * uniform01(rng), 0.01 + 0.98 * uniform01(rng), 0.01 + 0.98 * uniform01(rng)};
    const double f = fuse_views(p);
    std::reverse(p.begin(), p.end());
    EXPECT_NEAR(fuse_views(p), f, 1e-12);
    const std::vector<double> with_half{p[0], 0.5};
    EXPECT_NEAR(fuse_views(with_half), p[0], 1e-12);
  }
}

TEST(Store, SinglePairAndDefault) {
  Matrix x(3, 1);
  x(1, 0) = 1.0;
  x(2, 0) = 50.0;
  Dataset d;
  d.features = x;
  const auto g = build_neighbor_graph(x, 1);
  const IsotonicModel model({0.5, 2.0}, {0.9, 0.1});
  const std::vector<IsotonicModel> models{model};
  const auto store = build_store(g, models, d);
  EXPECT_DOUBLE_EQ(store.probability(0, 1), model.predict(1.0));
  EXPECT_DOUBLE_EQ(store.probability(1, 0), model.predict(1.0));
  // 2 lists 1 as its nearest neighbor; 0 and 2 are never paired.
  EXPECT_DOUBLE_EQ(store.probability(0, 2), kDefaultEpsilon);
  EXPECT_EQ(store.entry_count(), 2u);
  EXPECT_TRUE(store.contains(1, 2));
  EXPECT_FALSE(store.contains(0, 2));
}

TEST(Store, MutualNeighborsStoredOnce) {
  PairProbabilityStore s(4, 1e-4);
  s.set(0, 1, 0.3);
  s.set(1, 0, 0.3);
  s.set(2, 3, 0.7);
  s.finalize();
  EXPECT_EQ(s.entry_count(), 2u);
  EXPECT_EQ(s.neighbors(0).size(), 1u);
  EXPECT_NEAR(s.log_odds(2, 3), std::log(0.7 / 0.3), 1e-12);
}

TEST(Store, FusedViews) {
  Dataset d;
  d.features = Matrix(3, 1);
  d.features(1, 0) = 1.0;
  d.features(2, 0) = 3.0;
  d.views = {d.features, d.features};
  const auto g = build_neighbor_graph(d.features, 1);
  const IsotonicModel m({0.0, 4.0}, {0.9, 0.5});
  const std::vector<IsotonicModel> models{m, m};
  const auto store = build_store(g, models, d);
  const double p = m.predict(1.0);
  EXPECT_NEAR(store.probability(0, 1), p * p / (p * p + (1 - p) * (1 - p)), 1e-12);
}

TEST(Calibration, SameBlobPairsScoreHigher) {
  const auto d = make_blobs({400, 4, 2, 1.0, 6.0, 0.0, 3.0, 12});
  PairwiseOptions opt;
  opt.neighbors = 20;
  const auto g = build_neighbor_graph(d.features, opt.neighbors);
  const auto models = fit_pairwise_models(d, g, opt);
  const auto store = build_store(g, models, d);
  double same = 0, cross = 0;
  std::size_t ns = 0, nc = 0;
  // Over all pairs; pairs outside the graph score the floor.
  for (SampleId i = 0; i < d.size(); ++i)
    for (SampleId j = i + 1; j < d.size(); ++j) {
      if ((*d.labels)[i] == (*d.labels)[j]) {
        same += store.probability(i, j);
        ++ns;
      } else {
        cross += store.probability(i, j);
        ++nc;
      }
    }
  ASSERT_GT(ns, 0u);
  ASSERT_GT(nc, 0u);
  EXPECT_GT(same / static_cast<double>(ns), cross / static_cast<double>(nc));
}
