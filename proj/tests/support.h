/* Copyright 2026 The TAGL Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#ifndef TAGL_TESTS_SUPPORT_H_
#define TAGL_TESTS_SUPPORT_H_

// Hand-rolled random generators for property tests.

#include <cstdint>
#include <random>
#include <vector>

#include "tagl/aspects.h"
#include "tagl/grid.h"

namespace tagl::testing {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng_);
  }
  double normal(double sigma = 1.0) {
    return std::normal_distribution<double>(0.0, sigma)(rng_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }
  bool coin(double p = 0.5) { return uniform() < p; }

  GridShape shape(std::size_t lo, std::size_t hi) {
    return GridShape(lo + index(hi - lo + 1), lo + index(hi - lo + 1));
  }

  // Values drawn from a mix of exact 0, exact 1 and uniform reals.
  ProbMap prob_map(GridShape s, double zero_share = 0.2, double one_share = 0.1) {
    std::vector<double> v(s.pixels());
    for (double& x : v) {
      const double u = uniform();
      x = u < zero_share ? 0.0 : u < zero_share + one_share ? 1.0 : uniform();
    }
    return ProbMap(s, std::move(v));
  }
  ProbMap prob_map_in(GridShape s, double lo, double hi) {
    std::vector<double> v(s.pixels());
    for (double& x : v) x = uniform(lo, hi);
    return ProbMap(s, std::move(v));
  }
  BinaryMask mask(GridShape s, double p = 0.5) {
    std::vector<std::uint8_t> v(s.pixels());
    for (auto& x : v) x = coin(p) ? 1 : 0;
    return BinaryMask(s, std::move(v));
  }
  LabelMap labels(GridShape s, std::size_t classes) {
    std::vector<std::uint8_t> v(s.pixels());
    for (auto& x : v) x = static_cast<std::uint8_t>(index(classes));
    return LabelMap(s, classes, std::move(v));
  }
  LogitStack logits(GridShape s, std::size_t classes, double sigma = 2.0) {
    std::vector<double> v(s.pixels() * classes);
    for (double& x : v) x = normal(sigma);
    return LogitStack(s, classes, std::move(v));
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Atlas of `level` that splits an H x W grid into vertical bands, one per
// territory, using every column.
inline TerritoryAtlas band_atlas(GridShape s, Level level) {
  const std::vector<int> ids = territories_at(level);
  std::vector<BinaryMask> masks;
  for (std::size_t k = 0; k < ids.size(); ++k) {
    std::vector<std::uint8_t> v(s.pixels(), 0);
    for (std::size_t r = 0; r < s.height(); ++r) {
      for (std::size_t c = 0; c < s.width(); ++c) {
        if (c * ids.size() / s.width() == k) v[s.index(r, c)] = 1;
      }
    }
    masks.emplace_back(s, std::move(v));
  }
  return TerritoryAtlas(level, std::move(masks));
}

}  // namespace tagl::testing

#endif  // TAGL_TESTS_SUPPORT_H_
