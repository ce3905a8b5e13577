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

// Seeded Gaussian-blob datasets for tests and benchmarks.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "a3s/core.hpp"
#include "a3s/pairwise.hpp"

namespace a3s {

struct BlobSpec {
  std::size_t n = 1000;
  std::size_t k = 20;
  std::size_t dims = 8;
  double spread = 1.0;         // per-axis standard deviation of regular points
  double box = 10.0;           // centers uniform in [-box, box]^dims
  double noise_fraction = 0.0; // share of points drawn with a wider spread
  double noise_scale = 3.0;    // noisy points use spread * noise_scale
  std::uint64_t seed = 0;
};

/// Standard normal via Box-Muller on uniform01, identical across platforms.
inline double standard_normal(std::mt19937_64& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

/// Class sizes differ by at most one. Noisy points keep their class label;
/// they are simply drawn farther from the class center.
inline Dataset make_blobs(const BlobSpec& spec) {
  if (spec.k == 0 || spec.n < spec.k || spec.dims == 0) throw ConfigError("invalid blob specification");
  if (!(spec.noise_fraction >= 0.0 && spec.noise_fraction <= 1.0)) throw ConfigError("noise fraction must lie in [0, 1]");
  std::mt19937_64 rng(spec.seed);
  Matrix centers(spec.k, spec.dims);
  for (auto& v : centers.data) v = (2.0 * uniform01(rng) - 1.0) * spec.box;

  Dataset d;
  d.features = Matrix(spec.n, spec.dims);
  d.labels = std::vector<std::int64_t>(spec.n);
  const auto noisy = static_cast<std::size_t>(std::llround(spec.noise_fraction * static_cast<double>(spec.n)));
  // Partial Fisher-Yates draw of the noisy sample ids.
  std::vector<std::size_t> ids(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) ids[i] = i;
  std::vector<char> is_noisy(spec.n, 0);
  for (std::size_t q = 0; q < noisy; ++q) {
    const std::size_t pick = q + static_cast<std::size_t>(rng() % (spec.n - q));
    std::swap(ids[q], ids[pick]);
    is_noisy[ids[q]] = 1;
  }
  for (std::size_t i = 0; i < spec.n; ++i) {
    const std::size_t c = i % spec.k;
    (*d.labels)[i] = static_cast<std::int64_t>(c);
    const double sd = spec.spread * (is_noisy[i] ? spec.noise_scale : 1.0);
    for (std::size_t j = 0; j < spec.dims; ++j) d.features(i, j) = centers(c, j) + sd * standard_normal(rng);
  }
  return d;
}

}  // namespace a3s
