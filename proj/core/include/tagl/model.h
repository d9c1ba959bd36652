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
#ifndef TAGL_MODEL_H_
#define TAGL_MODEL_H_

// Toy per-pixel predictor: fixed 13-channel features and a linear head.
//
// Feature channels, in order:
//   0      normalized intensity
//   1      contralateral difference: value at the mirrored pixel minus here
//   2..11  territory one-hot (territory id t -> channel 1 + t), zero outside
//   12     bias, 1 everywhere

#include <cstdint>
#include <span>
#include <vector>

#include "tagl/aspects.h"
#include "tagl/grid.h"

namespace tagl {

inline constexpr std::size_t kFeatureCount = 13;
inline constexpr std::size_t kIntensityChannel = 0;
inline constexpr std::size_t kContralateralChannel = 1;
inline constexpr std::size_t kTerritoryChannel0 = 2;
inline constexpr std::size_t kBiasChannel = 12;

// Compact representation of the 13-channel field: the one-hot block is kept
// as a territory index.
class FeatureField {
 public:
  FeatureField(GridShape shape, std::vector<double> intensity,
               std::vector<double> contralateral,
               std::vector<std::uint8_t> territory);

  const GridShape& shape() const { return shape_; }
  std::size_t pixels() const { return shape_.pixels(); }
  std::span<const double> intensity() const { return intensity_; }
  std::span<const double> contralateral() const { return contralateral_; }
  std::span<const std::uint8_t> territory() const { return territory_; }

  double value(std::size_t channel, std::size_t pixel) const;
  // Dense channel-outermost copy with kFeatureCount channels.
  Field dense() const;

 private:
  GridShape shape_;
  std::vector<double> intensity_;
  std::vector<double> contralateral_;
  std::vector<std::uint8_t> territory_;
};

FeatureField extract_features(const Image& image, const TerritoryAtlas& atlas);

// Weight matrix of shape features x classes, row-major (w[f * C + c]).
// Per-class bias lives in the row of the bias feature.
class LinearHead {
 public:
  LinearHead(std::size_t features, std::size_t classes);
  LinearHead(std::size_t features, std::size_t classes,
             std::vector<double> weights);

  static LinearHead Zeros() { return LinearHead(kFeatureCount, kAspectsClasses); }

  std::size_t features() const { return features_; }
  std::size_t classes() const { return classes_; }
  std::span<const double> weights() const { return weights_; }
  std::span<double> mutable_weights() { return weights_; }
  double at(std::size_t f, std::size_t c) const {
    return weights_[f * classes_ + c];
  }
  double& at(std::size_t f, std::size_t c) { return weights_[f * classes_ + c]; }

  friend bool operator==(const LinearHead&, const LinearHead&) = default;

 private:
  std::size_t features_;
  std::size_t classes_;
  std::vector<double> weights_;
};

// Per-pixel logits W^T x.
LogitStack forward(const LinearHead& head, const FeatureField& features);
// Generic dense variant; `features` has one channel per head row.
LogitStack forward(const LinearHead& head, const Field& features);

// d(loss)/dW from d(loss)/d(logits), same layout as LinearHead weights.
std::vector<double> head_gradient(const FeatureField& features,
                                  const Field& grad_logits,
                                  std::size_t classes);

}  // namespace tagl

#endif  // TAGL_MODEL_H_
