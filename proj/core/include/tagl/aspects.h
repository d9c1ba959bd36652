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
#ifndef TAGL_ASPECTS_H_
#define TAGL_ASPECTS_H_

// ASPECTS territory model. Ten MCA territories over two axial levels:
// C, L, IC, I, M1-M3 at the basal-ganglia level and M4-M6 at the
// supraganglionic level. Territory ids are 1..10 and double as class
// indices in 11-class label maps (0 is background).

#include <array>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "tagl/grid.h"

namespace tagl {

enum class Level { kBG, kSG };

std::string_view to_string(Level level);
std::optional<Level> parse_level(std::string_view name);

struct Territory {
  int id;
  std::string_view name;
  Level level;
};

inline constexpr std::size_t kAspectsClasses = 11;
inline constexpr int kTerritoryCount = 10;

inline constexpr std::array<Territory, kTerritoryCount> kTerritories = {{
    {1, "C", Level::kBG},
    {2, "L", Level::kBG},
    {3, "IC", Level::kBG},
    {4, "I", Level::kBG},
    {5, "M1", Level::kBG},
    {6, "M2", Level::kBG},
    {7, "M3", Level::kBG},
    {8, "M4", Level::kSG},
    {9, "M5", Level::kSG},
    {10, "M6", Level::kSG},
}};

const Territory& territory(int id);
std::optional<int> territory_id(std::string_view name);
// Ids of the territories read at `level`, ascending.
std::vector<int> territories_at(Level level);

// One mask per territory of a level, in ascending id order. Masks are
// pairwise disjoint.
class TerritoryAtlas {
 public:
  TerritoryAtlas(Level level, std::vector<BinaryMask> masks);

  Level level() const { return level_; }
  const GridShape& shape() const { return masks_.front().shape(); }
  const std::vector<int>& ids() const { return ids_; }
  const std::vector<BinaryMask>& masks() const { return masks_; }
  const BinaryMask& mask(int id) const;
  // Territory id per pixel, 0 outside every mask.
  std::span<const std::uint8_t> index_map() const { return index_map_; }

  TerritoryAtlas flipped_horizontal() const;

  friend bool operator==(const TerritoryAtlas& a, const TerritoryAtlas& b) {
    return a.level_ == b.level_ && a.masks_ == b.masks_;
  }

 private:
  Level level_;
  std::vector<int> ids_;
  std::vector<BinaryMask> masks_;
  std::vector<std::uint8_t> index_map_;
};

enum class InvolvementRule {
  // Mean infarct probability over the mask exceeds theta.
  kMeanProbability,
  // Fraction of mask pixels with probability > 0.5 exceeds theta.
  kPixelFraction,
};

std::string_view to_string(InvolvementRule rule);
std::optional<InvolvementRule> parse_involvement_rule(std::string_view name);

struct TerritoryInvolvement {
  int id;
  double fraction;
  bool involved;
};

inline constexpr double kDefaultTheta = 0.5;

std::vector<TerritoryInvolvement> territory_involvement(
    const ProbMap& prob_infarct, const TerritoryAtlas& atlas, double theta,
    InvolvementRule rule = InvolvementRule::kMeanProbability);

struct AspectsResult {
  // Involved territory ids, ascending.
  std::vector<int> involved;
  // Indexed by territory id - 1.
  std::array<double, kTerritoryCount> per_territory_fraction{};
  int score = 10;
};

AspectsResult aspects_score(
    const ProbMap& bg_prob, const TerritoryAtlas& bg_atlas,
    const ProbMap& sg_prob, const TerritoryAtlas& sg_atlas, double theta,
    InvolvementRule rule = InvolvementRule::kMeanProbability);

// Hard 0/1 infarct probability from a label map (1 wherever not background).
ProbMap hard_probability(const LabelMap& labels);

}  // namespace tagl

#endif  // TAGL_ASPECTS_H_
