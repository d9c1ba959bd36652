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
#include "tagl/aspects.h"

#include <algorithm>
#include <cctype>
#include <string>

namespace tagl {
namespace {

std::string Lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

}  // namespace

std::string_view to_string(Level level) {
  return level == Level::kBG ? "bg" : "sg";
}

std::optional<Level> parse_level(std::string_view name) {
  const std::string lower = Lower(name);
  if (lower == "bg") return Level::kBG;
  if (lower == "sg") return Level::kSG;
  return std::nullopt;
}

const Territory& territory(int id) {
  if (id < 1 || id > kTerritoryCount) {
    throw ValidationError("territory id " + std::to_string(id) +
                          " outside 1..10");
  }
  return kTerritories[static_cast<std::size_t>(id - 1)];
}

std::optional<int> territory_id(std::string_view name) {
  for (const Territory& t : kTerritories) {
    if (Lower(t.name) == Lower(name)) return t.id;
  }
  return std::nullopt;
}

std::vector<int> territories_at(Level level) {
  std::vector<int> ids;
  for (const Territory& t : kTerritories) {
    if (t.level == level) ids.push_back(t.id);
  }
  return ids;
}

TerritoryAtlas::TerritoryAtlas(Level level, std::vector<BinaryMask> masks)
    : level_(level), ids_(territories_at(level)), masks_(std::move(masks)) {
  if (masks_.size() != ids_.size()) {
    throw ValidationError("TerritoryAtlas: level " +
                          std::string(to_string(level)) + " needs " +
                          std::to_string(ids_.size()) + " masks, got " +
                          std::to_string(masks_.size()));
  }
  const GridShape shape = masks_.front().shape();
  index_map_.assign(shape.pixels(), 0);
  for (std::size_t k = 0; k < masks_.size(); ++k) {
    if (masks_[k].shape() != shape) {
      throw ValidationError("TerritoryAtlas: masks differ in shape");
    }
    for (std::size_t i = 0; i < shape.pixels(); ++i) {
      if (!masks_[k][i]) continue;
      if (index_map_[i] != 0) {
        throw ValidationError(
            "TerritoryAtlas: masks " +
            std::string(territory(index_map_[i]).name) + " and " +
            std::string(territory(ids_[k]).name) + " overlap at pixel " +
            std::to_string(i));
      }
      index_map_[i] = static_cast<std::uint8_t>(ids_[k]);
    }
  }
}

const BinaryMask& TerritoryAtlas::mask(int id) const {
  const auto it = std::find(ids_.begin(), ids_.end(), id);
  if (it == ids_.end()) {
    throw ValidationError("TerritoryAtlas: territory " + std::to_string(id) +
                          " is not on level " + std::string(to_string(level_)));
  }
  return masks_[static_cast<std::size_t>(it - ids_.begin())];
}

TerritoryAtlas TerritoryAtlas::flipped_horizontal() const {
  std::vector<BinaryMask> flipped;
  flipped.reserve(masks_.size());
  for (const BinaryMask& m : masks_) flipped.push_back(flip_horizontal(m));
  return TerritoryAtlas(level_, std::move(flipped));
}

std::string_view to_string(InvolvementRule rule) {
  return rule == InvolvementRule::kMeanProbability ? "mean-probability"
                                                   : "pixel-fraction";
}

std::optional<InvolvementRule> parse_involvement_rule(std::string_view name) {
  const std::string lower = Lower(name);
  if (lower == "mean-probability" || lower == "mean") {
    return InvolvementRule::kMeanProbability;
  }
  if (lower == "pixel-fraction") return InvolvementRule::kPixelFraction;
  return std::nullopt;
}

std::vector<TerritoryInvolvement> territory_involvement(
    const ProbMap& prob_infarct, const TerritoryAtlas& atlas, double theta,
    InvolvementRule rule) {
  if (prob_infarct.shape() != atlas.shape()) {
    throw ValidationError("territory_involvement: map/atlas shape mismatch");
  }
  if (!(theta > 0.0 && theta < 1.0)) {
    throw ValidationError("territory_involvement: theta must lie in (0, 1)");
  }
  std::vector<TerritoryInvolvement> out;
  out.reserve(atlas.ids().size());
  for (std::size_t k = 0; k < atlas.ids().size(); ++k) {
    const BinaryMask& mask = atlas.masks()[k];
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < mask.pixels(); ++i) {
      if (!mask[i]) continue;
      ++n;
      if (rule == InvolvementRule::kMeanProbability) {
        sum += prob_infarct[i];
      } else if (prob_infarct[i] > 0.5) {
        sum += 1.0;
      }
    }
    if (n == 0) {
      throw ValidationError("territory_involvement: territory " +
                            std::string(territory(atlas.ids()[k]).name) +
                            " has an empty mask");
    }
    const double fraction = sum / static_cast<double>(n);
    out.push_back({atlas.ids()[k], fraction, fraction > theta});
  }
  return out;
}

AspectsResult aspects_score(const ProbMap& bg_prob,
                            const TerritoryAtlas& bg_atlas,
                            const ProbMap& sg_prob,
                            const TerritoryAtlas& sg_atlas, double theta,
                            InvolvementRule rule) {
  if (bg_atlas.level() != Level::kBG || sg_atlas.level() != Level::kSG) {
    throw ValidationError(
        "aspects_score: expected a BG atlas and an SG atlas, got " +
        std::string(to_string(bg_atlas.level())) + " and " +
        std::string(to_string(sg_atlas.level())));
  }
  AspectsResult result;
  for (const auto* level : {&bg_atlas, &sg_atlas}) {
    const ProbMap& prob = level == &bg_atlas ? bg_prob : sg_prob;
    for (const TerritoryInvolvement& t :
         territory_involvement(prob, *level, theta, rule)) {
      result.per_territory_fraction[static_cast<std::size_t>(t.id - 1)] =
          t.fraction;
      if (t.involved) result.involved.push_back(t.id);
    }
  }
  std::sort(result.involved.begin(), result.involved.end());
  result.score = kTerritoryCount - static_cast<int>(result.involved.size());
  return result;
}

ProbMap hard_probability(const LabelMap& labels) {
  std::vector<double> p(labels.pixels());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = labels[i] != 0 ? 1.0 : 0.0;
  return ProbMap(labels.shape(), std::move(p));
}

}  // namespace tagl
