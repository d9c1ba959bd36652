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
#include "tagl/model.h"

#include <cmath>
#include <string>

namespace tagl {

FeatureField::FeatureField(GridShape shape, std::vector<double> intensity,
                           std::vector<double> contralateral,
                           std::vector<std::uint8_t> territory)
    : shape_(shape),
      intensity_(std::move(intensity)),
      contralateral_(std::move(contralateral)),
      territory_(std::move(territory)) {
  const std::size_t n = shape_.pixels();
  if (intensity_.size() != n || contralateral_.size() != n ||
      territory_.size() != n) {
    throw ValidationError("FeatureField: channel sizes do not match the grid");
  }
  for (std::uint8_t t : territory_) {
    if (t > kTerritoryCount) {
      throw ValidationError("FeatureField: territory index out of range");
    }
  }
}

double FeatureField::value(std::size_t channel, std::size_t pixel) const {
  switch (channel) {
    case kIntensityChannel: return intensity_[pixel];
    case kContralateralChannel: return contralateral_[pixel];
    case kBiasChannel: return 1.0;
    default: {
      if (channel >= kFeatureCount) {
        throw ValidationError("FeatureField: channel out of range");
      }
      const std::size_t t = territory_[pixel];
      return t != 0 && channel == kTerritoryChannel0 + t - 1 ? 1.0 : 0.0;
    }
  }
}

Field FeatureField::dense() const {
  Field out(shape_, kFeatureCount, 0.0);
  const std::size_t n = pixels();
  for (std::size_t f = 0; f < kFeatureCount; ++f) {
    for (std::size_t i = 0; i < n; ++i) out[f * n + i] = value(f, i);
  }
  return out;
}

FeatureField extract_features(const Image& image, const TerritoryAtlas& atlas) {
  if (image.shape() != atlas.shape()) {
    throw ValidationError("extract_features: image/atlas shape mismatch");
  }
  const GridShape& shape = image.shape();
  const std::size_t h = shape.height(), w = shape.width();
  std::vector<double> intensity(image.values().begin(), image.values().end());
  std::vector<double> contra(shape.pixels());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      contra[shape.index(r, c)] = image.at(r, w - 1 - c) - image.at(r, c);
    }
  }
  const auto index = atlas.index_map();
  return FeatureField(shape, std::move(intensity), std::move(contra),
                      std::vector<std::uint8_t>(index.begin(), index.end()));
}

LinearHead::LinearHead(std::size_t features, std::size_t classes)
    : LinearHead(features, classes,
                 std::vector<double>(features * classes, 0.0)) {}

LinearHead::LinearHead(std::size_t features, std::size_t classes,
                       std::vector<double> weights)
    : features_(features), classes_(classes), weights_(std::move(weights)) {
  if (features_ == 0 || classes_ == 0) {
    throw ValidationError("LinearHead: dimensions must be positive");
  }
  if (weights_.size() != features_ * classes_) {
    throw ValidationError("LinearHead: expected " +
                          std::to_string(features_ * classes_) +
                          " weights, got " + std::to_string(weights_.size()));
  }
  for (double v : weights_) {
    if (!std::isfinite(v)) throw ValidationError("LinearHead: non-finite weight");
  }
}

LogitStack forward(const LinearHead& head, const FeatureField& features) {
  if (head.features() != kFeatureCount) {
    throw ValidationError("forward: head has " +
                          std::to_string(head.features()) +
                          " feature rows, field has " +
                          std::to_string(kFeatureCount));
  }
  const std::size_t n = features.pixels();
  const std::size_t classes = head.classes();
  const auto x = features.intensity();
  const auto contra = features.contralateral();
  const auto terr = features.territory();
  std::vector<double> z(classes * n);
  // Accumulation order matches the dense path (ascending channel) with the
  // zero one-hot terms skipped, so both paths agree bit for bit.
  for (std::size_t c = 0; c < classes; ++c) {
    const double wx = head.at(kIntensityChannel, c);
    const double wc = head.at(kContralateralChannel, c);
    const double wb = head.at(kBiasChannel, c);
    double wt[kTerritoryCount + 1] = {0.0};
    for (int t = 1; t <= kTerritoryCount; ++t) {
      wt[t] = head.at(kTerritoryChannel0 + static_cast<std::size_t>(t) - 1, c);
    }
    double* out = z.data() + c * n;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0 + wx * x[i];
      acc += wc * contra[i];
      if (terr[i] != 0) acc += wt[terr[i]];
      acc += wb;
      out[i] = acc;
    }
  }
  return LogitStack(features.shape(), classes, std::move(z));
}

LogitStack forward(const LinearHead& head, const Field& features) {
  if (features.channels() != head.features()) {
    throw ValidationError("forward: head has " +
                          std::to_string(head.features()) +
                          " feature rows, field has " +
                          std::to_string(features.channels()));
  }
  const std::size_t n = features.pixels();
  const std::size_t classes = head.classes();
  std::vector<double> z(classes * n);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t f = 0; f < head.features(); ++f) {
        const double v = features[f * n + i];
        if (v != 0.0) acc += head.at(f, c) * v;
      }
      z[c * n + i] = acc;
    }
  }
  return LogitStack(features.shape(), classes, std::move(z));
}

std::vector<double> head_gradient(const FeatureField& features,
                                  const Field& grad_logits,
                                  std::size_t classes) {
  if (grad_logits.shape() != features.shape() ||
      grad_logits.channels() != classes) {
    throw ValidationError("head_gradient: gradient/feature mismatch");
  }
  const std::size_t n = features.pixels();
  const auto x = features.intensity();
  const auto contra = features.contralateral();
  const auto terr = features.territory();
  std::vector<double> grad(kFeatureCount * classes, 0.0);
  for (std::size_t c = 0; c < classes; ++c) {
    const auto g = grad_logits.channel(c);
    double gx = 0.0, gc = 0.0, gb = 0.0;
    double gt[kTerritoryCount + 1] = {0.0};
    for (std::size_t i = 0; i < n; ++i) {
      gx += g[i] * x[i];
      gc += g[i] * contra[i];
      gt[terr[i]] += g[i];
      gb += g[i];
    }
    grad[kIntensityChannel * classes + c] = gx;
    grad[kContralateralChannel * classes + c] = gc;
    grad[kBiasChannel * classes + c] = gb;
    for (int t = 1; t <= kTerritoryCount; ++t) {
      grad[(kTerritoryChannel0 + static_cast<std::size_t>(t) - 1) * classes +
           c] = gt[t];
    }
  }
  return grad;
}

}  // namespace tagl
