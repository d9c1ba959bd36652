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
#ifndef TAGL_PHANTOM_H_
#define TAGL_PHANTOM_H_

// Seeded synthetic paired BG/SG slices with territory atlases and coupled
// infarcts.
//
// Geometry: an elliptical brain centred in the grid. Territories are
// angular/radial sectors of the image-left hemisphere; the SG cortical
// sectors M4-M6 sit over the same pixels as M1-M3. Lesions only occur in
// the image-left hemisphere and always fill a whole territory, so the
// mirrored (image-right) pixel is healthy tissue with the same base level.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "tagl/aspects.h"
#include "tagl/grid.h"

namespace tagl {

struct PhantomConfig {
  GridShape shape{128, 128};
  // Probability that an infarcted M1/M2/M3 forces M4/M5/M6.
  double coupling_rho = 0.8;
  // Independent per-territory infarction probability.
  double lesion_rate = 0.25;
  double noise_sigma = 0.02;
  double hypodensity_delta = 0.08;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr std::size_t kMinPhantomSide = 32;
inline constexpr std::size_t kMinTerritoryPixels = 8;

struct AtlasBuild {
  TerritoryAtlas atlas;
  BinaryMask brain;
  // Piecewise-constant healthy tissue intensity, mirror-symmetric.
  Image base_intensity;
};

// Deterministic for fixed inputs. Throws GenerationError when the grid is
// below kMinPhantomSide or a territory would get fewer than
// kMinTerritoryPixels pixels.
AtlasBuild build_atlas(const GridShape& shape, Level level);

struct LevelSlice {
  Image image;
  LabelMap labels;
  std::shared_ptr<const TerritoryAtlas> atlas;
};

struct PairedCase {
  std::string case_id;
  LevelSlice bg;
  LevelSlice sg;
  // Ground-truth infarcted territory ids, ascending.
  std::vector<int> truth_involved;

  const LevelSlice& level(Level l) const { return l == Level::kBG ? bg : sg; }
};

// Per-case RNG seed: a splitmix64-style hash of (seed, case_index).
std::uint64_t case_stream_seed(std::uint64_t seed, std::uint64_t case_index);

std::string case_id_for(std::uint64_t case_index);

// Reusable generator: builds the two atlases once and shares them across
// every case it samples.
class PhantomGenerator {
 public:
  explicit PhantomGenerator(PhantomConfig cfg);

  const PhantomConfig& config() const { return cfg_; }
  const std::shared_ptr<const TerritoryAtlas>& atlas(Level l) const {
    return l == Level::kBG ? bg_atlas_ : sg_atlas_;
  }
  const BinaryMask& brain(Level l) const {
    return l == Level::kBG ? bg_brain_ : sg_brain_;
  }

  PairedCase sample(std::uint64_t case_index) const;

 private:
  PhantomConfig cfg_;
  std::shared_ptr<const TerritoryAtlas> bg_atlas_;
  std::shared_ptr<const TerritoryAtlas> sg_atlas_;
  BinaryMask bg_brain_;
  BinaryMask sg_brain_;
  Image bg_base_;
  Image sg_base_;
};

PairedCase sample_case(const PhantomConfig& cfg, std::uint64_t case_index);

// Train/val/test splits drawn from one config. Case indices run
// consecutively: train first, then val, then test.
struct Dataset {
  PhantomConfig phantom;
  std::vector<PairedCase> train;
  std::vector<PairedCase> val;
  std::vector<PairedCase> test;
};

Dataset generate_dataset(const PhantomConfig& cfg, std::size_t n_train,
                         std::size_t n_val, std::size_t n_test,
                         std::size_t threads = 1);

inline constexpr double kMaxJitter = 0.05;

// Horizontal flip applied to images, labels and atlases of both levels, and
// a constant `jitter` added to both images.
PairedCase augment(const PairedCase& pc, bool flip, double jitter);

// Throws ValidationError unless every labelled pixel lies inside the mask of
// its territory and each level only uses its own territory classes.
void check_label_atlas_consistency(const PairedCase& pc);

}  // namespace tagl

#endif  // TAGL_PHANTOM_H_
