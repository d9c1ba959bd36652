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
#include "tagl/phantom.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>
#include <random>

#include "tagl/parallel.h"

namespace tagl {
namespace {

// Ellipse semi-axes as fractions of the grid height/width.
constexpr double kBrainSemiY = 0.44;
constexpr double kBrainSemiX = 0.38;

// Normalized radius ranges and angles (degrees, -90 = top, +90 = bottom,
// measured in the image-left hemisphere) of each territory sector.
struct Sector {
  int id;
  double rho_lo, rho_hi;
  double phi_lo, phi_hi;
};

constexpr Sector kSectors[] = {
    {1, 0.08, 0.42, -80.0, -35.0},   // C
    {2, 0.34, 0.50, -30.0, 40.0},    // L
    {3, 0.08, 0.32, -30.0, 40.0},    // IC
    {4, 0.54, 0.64, -35.0, 45.0},    // I
    {5, 0.68, 0.95, -75.0, -25.0},   // M1
    {6, 0.68, 0.95, -25.0, 25.0},    // M2
    {7, 0.68, 0.95, 25.0, 75.0},     // M3
    {8, 0.68, 0.95, -75.0, -25.0},   // M4
    {9, 0.68, 0.95, -25.0, 25.0},    // M5
    {10, 0.68, 0.95, 25.0, 75.0},    // M6
};

// Healthy tissue levels (normalized intensity).
constexpr double kAirLevel = 0.0;
constexpr double kWhiteMatterLevel = 0.50;
constexpr double kDeepGrayLevel = 0.56;
constexpr double kCortexLevel = 0.60;
constexpr double kCortexRho = 0.66;

struct Polar {
  double rho;
  double phi;  // degrees; computed from |u| so it is mirror-symmetric
  bool left;   // image-left hemisphere, strictly off the midline
};

Polar ToPolar(const GridShape& shape, std::size_t r, std::size_t c) {
  const double cy = (static_cast<double>(shape.height()) - 1.0) / 2.0;
  const double cx = (static_cast<double>(shape.width()) - 1.0) / 2.0;
  const double v = (static_cast<double>(r) - cy) /
                   (kBrainSemiY * static_cast<double>(shape.height()));
  const double u = (static_cast<double>(c) - cx) /
                   (kBrainSemiX * static_cast<double>(shape.width()));
  Polar p;
  p.rho = std::sqrt(u * u + v * v);
  p.phi = std::atan2(v, std::abs(u)) * 180.0 / std::numbers::pi;
  p.left = static_cast<double>(c) < cx;
  return p;
}

bool InSector(const Polar& p, const Sector& s) {
  return p.rho >= s.rho_lo && p.rho < s.rho_hi && p.phi >= s.phi_lo &&
         p.phi < s.phi_hi;
}

const Sector& SectorFor(int id) { return kSectors[id - 1]; }

// splitmix64 finalizer.
std::uint64_t Mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

void PhantomConfig::validate() const {
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError(std::string("PhantomConfig: ") + name +
                            " must lie in [0, 1], got " + std::to_string(v));
    }
  };
  unit(coupling_rho, "coupling_rho");
  unit(lesion_rate, "lesion_rate");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw ValidationError("PhantomConfig: noise_sigma must be finite and >= 0");
  }
  if (!std::isfinite(hypodensity_delta)) {
    throw ValidationError("PhantomConfig: hypodensity_delta must be finite");
  }
}

AtlasBuild build_atlas(const GridShape& shape, Level level) {
  if (shape.height() < kMinPhantomSide || shape.width() < kMinPhantomSide) {
    throw GenerationError("phantom grid must be at least 32x32, got " +
                          std::to_string(shape.height()) + "x" +
                          std::to_string(shape.width()));
  }
  const std::vector<int> ids = territories_at(level);
  const std::size_t n = shape.pixels();
  std::vector<std::vector<std::uint8_t>> masks(ids.size(),
                                               std::vector<std::uint8_t>(n, 0));
  std::vector<std::uint8_t> brain(n, 0);
  std::vector<double> base(n, kAirLevel);

  for (std::size_t r = 0; r < shape.height(); ++r) {
    for (std::size_t c = 0; c < shape.width(); ++c) {
      const std::size_t i = shape.index(r, c);
      const Polar p = ToPolar(shape, r, c);
      if (p.rho > 1.0) continue;
      brain[i] = 1;
      // Base levels use the mirror-symmetric sector geometry of this level.
      double level_value = p.rho >= kCortexRho ? kCortexLevel
                                               : kWhiteMatterLevel;
      if (level == Level::kBG &&
          (InSector(p, SectorFor(1)) || InSector(p, SectorFor(2)))) {
        level_value = kDeepGrayLevel;
      }
      base[i] = level_value;
      if (!p.left) continue;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        if (InSector(p, SectorFor(ids[k]))) {
          masks[k][i] = 1;
          break;
        }
      }
    }
  }

  std::vector<BinaryMask> built;
  built.reserve(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) {
    BinaryMask m(shape, std::move(masks[k]));
    if (m.count() < kMinTerritoryPixels) {
      throw GenerationError(
          "grid " + std::to_string(shape.height()) + "x" +
          std::to_string(shape.width()) + " gives territory " +
          std::string(territory(ids[k]).name) + " only " +
          std::to_string(m.count()) + " pixels (need " +
          std::to_string(kMinTerritoryPixels) + ")");
    }
    built.push_back(std::move(m));
  }
  return AtlasBuild{TerritoryAtlas(level, std::move(built)),
                    BinaryMask(shape, std::move(brain)),
                    Image(shape, std::move(base))};
}

std::uint64_t case_stream_seed(std::uint64_t seed, std::uint64_t case_index) {
  return Mix(Mix(seed) ^ Mix(case_index + 0x632be59bd9b4e019ULL));
}

std::string case_id_for(std::uint64_t case_index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "case-%06llu",
                static_cast<unsigned long long>(case_index));
  return buf;
}

PhantomGenerator::PhantomGenerator(PhantomConfig cfg)
    : cfg_(cfg),
      bg_brain_(BinaryMask::Filled(cfg.shape, false)),
      sg_brain_(BinaryMask::Filled(cfg.shape, false)),
      bg_base_(Image::Filled(cfg.shape, 0.0)),
      sg_base_(Image::Filled(cfg.shape, 0.0)) {
  cfg_.validate();
  AtlasBuild bg = build_atlas(cfg_.shape, Level::kBG);
  AtlasBuild sg = build_atlas(cfg_.shape, Level::kSG);
  bg_atlas_ = std::make_shared<const TerritoryAtlas>(std::move(bg.atlas));
  sg_atlas_ = std::make_shared<const TerritoryAtlas>(std::move(sg.atlas));
  bg_brain_ = std::move(bg.brain);
  sg_brain_ = std::move(sg.brain);
  bg_base_ = std::move(bg.base_intensity);
  sg_base_ = std::move(sg.base_intensity);
}

PairedCase PhantomGenerator::sample(std::uint64_t case_index) const {
  std::mt19937_64 rng(case_stream_seed(cfg_.seed, case_index));
  std::bernoulli_distribution lesion(cfg_.lesion_rate);
  std::bernoulli_distribution couple(cfg_.coupling_rho);

  // Independent draws first (ids 1..10), then coupling for M1-M3 -> M4-M6.
  // Every draw is taken unconditionally so the stream layout is fixed.
  std::array<bool, kTerritoryCount + 1> infarcted{};
  for (int id = 1; id <= kTerritoryCount; ++id) infarcted[id] = lesion(rng);
  for (int k = 0; k < 3; ++k) {
    const bool propagate = couple(rng);
    if (infarcted[5 + k] && propagate) infarcted[8 + k] = true;
  }

  std::normal_distribution<double> noise(0.0, 1.0);
  auto make_level = [&](Level level) {
    const TerritoryAtlas& atlas = *this->atlas(level);
    const Image& base = level == Level::kBG ? bg_base_ : sg_base_;
    const auto index = atlas.index_map();
    const std::size_t n = cfg_.shape.pixels();
    std::vector<std::uint8_t> labels(n, 0);
    std::vector<double> image(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint8_t t = index[i];
      const bool hit = t != 0 && infarcted[t];
      if (hit) labels[i] = t;
      const double v = base[i] - (hit ? cfg_.hypodensity_delta : 0.0) +
                       cfg_.noise_sigma * noise(rng);
      // Stored at float precision so files round-trip the in-memory case.
      image[i] = static_cast<double>(static_cast<float>(v));
    }
    return LevelSlice{Image(cfg_.shape, std::move(image)),
                      LabelMap(cfg_.shape, kAspectsClasses, std::move(labels)),
                      this->atlas(level)};
  };

  PairedCase pc{case_id_for(case_index), make_level(Level::kBG),
                make_level(Level::kSG), {}};
  for (int id = 1; id <= kTerritoryCount; ++id) {
    if (infarcted[id]) pc.truth_involved.push_back(id);
  }
  return pc;
}

PairedCase sample_case(const PhantomConfig& cfg, std::uint64_t case_index) {
  return PhantomGenerator(cfg).sample(case_index);
}

Dataset generate_dataset(const PhantomConfig& cfg, std::size_t n_train,
                         std::size_t n_val, std::size_t n_test,
                         std::size_t threads) {
  const PhantomGenerator gen(cfg);
  const std::size_t total = n_train + n_val + n_test;
  std::vector<std::optional<PairedCase>> slots(total);
  parallel_for(total, threads, [&](std::size_t i) { slots[i] = gen.sample(i); });
  Dataset ds{cfg, {}, {}, {}};
  for (std::size_t i = 0; i < total; ++i) {
    auto& split = i < n_train ? ds.train : i < n_train + n_val ? ds.val : ds.test;
    split.push_back(std::move(*slots[i]));
  }
  return ds;
}

PairedCase augment(const PairedCase& pc, bool flip, double jitter) {
  if (!(std::abs(jitter) <= kMaxJitter)) {
    throw ValidationError("augment: |jitter| must be <= 0.05, got " +
                          std::to_string(jitter));
  }
  auto transform = [&](const LevelSlice& s) {
    Image image = flip ? flip_horizontal(s.image) : s.image;
    if (jitter != 0.0) {
      std::vector<double> v(image.values().begin(), image.values().end());
      for (double& x : v) x += jitter;
      image = Image(image.shape(), std::move(v));
    }
    if (!flip) return LevelSlice{std::move(image), s.labels, s.atlas};
    return LevelSlice{
        std::move(image), flip_horizontal(s.labels),
        std::make_shared<const TerritoryAtlas>(s.atlas->flipped_horizontal())};
  };
  return PairedCase{pc.case_id, transform(pc.bg), transform(pc.sg),
                    pc.truth_involved};
}

void check_label_atlas_consistency(const PairedCase& pc) {
  for (Level level : {Level::kBG, Level::kSG}) {
    const LevelSlice& s = pc.level(level);
    if (!s.atlas || s.atlas->level() != level) {
      throw ValidationError(pc.case_id + ": atlas level mismatch");
    }
    if (s.labels.shape() != s.atlas->shape() ||
        s.image.shape() != s.atlas->shape()) {
      throw ValidationError(pc.case_id + ": slice/atlas shape mismatch");
    }
    const auto index = s.atlas->index_map();
    for (std::size_t i = 0; i < s.labels.pixels(); ++i) {
      const std::uint8_t t = s.labels[i];
      if (t == 0) continue;
      if (territory(t).level != level) {
        throw ValidationError(pc.case_id + ": " +
                              std::string(to_string(level)) +
                              " slice uses foreign class " +
                              std::string(territory(t).name));
      }
      if (index[i] != t) {
        throw ValidationError(pc.case_id + ": pixel " + std::to_string(i) +
                              " labelled " + std::string(territory(t).name) +
                              " lies outside that territory");
      }
    }
  }
}

}  // namespace tagl
