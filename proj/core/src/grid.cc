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
#include "tagl/grid.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace tagl {
namespace {

void RequireFinite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValidationError(std::string(what) + ": non-finite value at index " +
                            std::to_string(i));
    }
  }
}

void RequireUnitInterval(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    // The negated form also rejects NaN.
    if (!(values[i] >= 0.0 && values[i] <= 1.0)) {
      throw ValidationError(std::string(what) + ": value " +
                            std::to_string(values[i]) + " at index " +
                            std::to_string(i) + " outside [0, 1]");
    }
  }
}

void RequireClasses(std::size_t classes, const char* what) {
  if (classes == 0) {
    throw ValidationError(std::string(what) + ": class count must be >= 1");
  }
}

template <typename T>
Grid<T> FlipColumns(const Grid<T>& grid) {
  Grid<T> out(grid.shape(), grid.channels(), T{});
  const std::size_t h = grid.shape().height();
  const std::size_t w = grid.shape().width();
  for (std::size_t c = 0; c < grid.channels(); ++c) {
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t col = 0; col < w; ++col) {
        out.at(c, r, w - 1 - col) = grid.at(c, r, col);
      }
    }
  }
  return out;
}

}  // namespace

GridShape::GridShape(std::size_t height, std::size_t width)
    : height_(height), width_(width) {
  if (height == 0 || width == 0) {
    throw ValidationError("grid shape must be at least 1x1, got " +
                          std::to_string(height) + "x" + std::to_string(width));
  }
}

Image::Image(GridShape shape, std::vector<double> values)
    : ValidatedGrid(Grid<double>(shape, 1, std::move(values))) {
  RequireFinite(grid_.values(), "Image");
}

Image Image::Filled(GridShape shape, double value) {
  return Image(shape, std::vector<double>(shape.pixels(), value));
}

ProbMap::ProbMap(GridShape shape, std::vector<double> values)
    : ValidatedGrid(Grid<double>(shape, 1, std::move(values))) {
  RequireUnitInterval(grid_.values(), "ProbMap");
}

ProbMap ProbMap::Filled(GridShape shape, double value) {
  return ProbMap(shape, std::vector<double>(shape.pixels(), value));
}

LogitStack::LogitStack(GridShape shape, std::size_t classes,
                       std::vector<double> values)
    : ValidatedGrid(Grid<double>(shape, classes, std::move(values))) {
  RequireClasses(classes, "LogitStack");
  RequireFinite(grid_.values(), "LogitStack");
}

ProbStack::ProbStack(GridShape shape, std::size_t classes,
                     std::vector<double> values)
    : ValidatedGrid(Grid<double>(shape, classes, std::move(values))) {
  RequireClasses(classes, "ProbStack");
  RequireUnitInterval(grid_.values(), "ProbStack");
  const std::size_t n = grid_.pixels();
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) sum += grid_[c * n + i];
    if (std::abs(sum - 1.0) > kProbSumTolerance) {
      throw ValidationError("ProbStack: pixel " + std::to_string(i) +
                            " sums to " + std::to_string(sum));
    }
  }
}

LabelMap::LabelMap(GridShape shape, std::size_t classes,
                   std::vector<std::uint8_t> values)
    : ValidatedGrid(Grid<std::uint8_t>(shape, 1, std::move(values))),
      classes_(classes) {
  RequireClasses(classes, "LabelMap");
  if (classes > 256) {
    throw ValidationError("LabelMap: at most 256 classes are representable");
  }
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (grid_[i] >= classes) {
      throw ValidationError("LabelMap: label " + std::to_string(grid_[i]) +
                            " at index " + std::to_string(i) +
                            " outside [0, " + std::to_string(classes) + ")");
    }
  }
}

BinaryMask::BinaryMask(GridShape shape, std::vector<std::uint8_t> values)
    : ValidatedGrid(Grid<std::uint8_t>(shape, 1, std::move(values))) {
  for (std::size_t i = 0; i < grid_.size(); ++i) {
    if (grid_[i] > 1) {
      throw ValidationError("BinaryMask: value " + std::to_string(grid_[i]) +
                            " at index " + std::to_string(i) + " is not 0/1");
    }
  }
}

BinaryMask BinaryMask::Filled(GridShape shape, bool value) {
  return BinaryMask(shape,
                    std::vector<std::uint8_t>(shape.pixels(), value ? 1 : 0));
}

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(
      std::count(grid_.values().begin(), grid_.values().end(), 1));
}

ProbStack softmax_pixelwise(const LogitStack& logits) {
  const std::size_t n = logits.pixels();
  const std::size_t classes = logits.classes();
  const auto z = logits.values();
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < n; ++i) {
    double zmax = z[i];
    for (std::size_t c = 1; c < classes; ++c) zmax = std::max(zmax, z[c * n + i]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = std::exp(z[c * n + i] - zmax);
      out[c * n + i] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (std::size_t c = 0; c < classes; ++c) out[c * n + i] *= inv;
  }
  return ProbStack(logits.shape(), classes, std::move(out));
}

Field softmax_backward(const ProbStack& probs, const Field& grad_probs) {
  if (grad_probs.shape() != probs.shape() ||
      grad_probs.channels() != probs.classes()) {
    throw ValidationError("softmax_backward: gradient/probability mismatch");
  }
  const std::size_t n = probs.pixels();
  const std::size_t classes = probs.classes();
  const auto p = probs.values();
  Field out(probs.shape(), classes, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      dot += p[c * n + i] * grad_probs[c * n + i];
    }
    for (std::size_t c = 0; c < classes; ++c) {
      out[c * n + i] = p[c * n + i] * (grad_probs[c * n + i] - dot);
    }
  }
  return out;
}

LabelMap argmax_labels(const ProbStack& probs) {
  const std::size_t n = probs.pixels();
  const std::size_t classes = probs.classes();
  if (classes > 256) {
    throw ValidationError("argmax_labels: at most 256 classes supported");
  }
  const auto p = probs.values();
  std::vector<std::uint8_t> labels(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (p[c * n + i] > p[best * n + i]) best = c;
    }
    labels[i] = static_cast<std::uint8_t>(best);
  }
  return LabelMap(probs.shape(), classes, std::move(labels));
}

ProbMap infarct_probability(const ProbStack& probs,
                            std::size_t background_class) {
  if (background_class >= probs.classes()) {
    throw ValidationError("infarct_probability: background class " +
                          std::to_string(background_class) +
                          " out of range for " +
                          std::to_string(probs.classes()) + " classes");
  }
  const auto bg = probs.channel(background_class);
  std::vector<double> out(bg.size());
  for (std::size_t i = 0; i < bg.size(); ++i) {
    out[i] = std::clamp(1.0 - bg[i], 0.0, 1.0);
  }
  return ProbMap(probs.shape(), std::move(out));
}

BinaryMask foreground_mask(const LabelMap& labels,
                           std::size_t background_class) {
  std::vector<std::uint8_t> out(labels.pixels());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = labels[i] != background_class ? 1 : 0;
  }
  return BinaryMask(labels.shape(), std::move(out));
}

Image flip_horizontal(const Image& image) {
  return Image(image.shape(), FlipColumns(image.grid()).release());
}

ProbMap flip_horizontal(const ProbMap& map) {
  return ProbMap(map.shape(), FlipColumns(map.grid()).release());
}

LabelMap flip_horizontal(const LabelMap& labels) {
  return LabelMap(labels.shape(), labels.classes(),
                  FlipColumns(labels.grid()).release());
}

BinaryMask flip_horizontal(const BinaryMask& mask) {
  return BinaryMask(mask.shape(), FlipColumns(mask.grid()).release());
}

}  // namespace tagl
