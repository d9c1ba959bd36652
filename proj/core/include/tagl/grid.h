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
#ifndef TAGL_GRID_H_
#define TAGL_GRID_H_

// Grid-valued value types shared by every module.
//
// All grids are row-major with (row, column) indexing, row 0 at the top.
// Multi-channel grids are channel-outermost: value(c, r, col) lives at
// c * H * W + r * W + col. Every type validates its invariants on
// construction and is immutable afterwards.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "tagl/error.h"

namespace tagl {

class GridShape {
 public:
  GridShape(std::size_t height, std::size_t width);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t pixels() const { return height_ * width_; }
  std::size_t index(std::size_t row, std::size_t col) const {
    return row * width_ + col;
  }

  friend bool operator==(const GridShape&, const GridShape&) = default;

 private:
  std::size_t height_;
  std::size_t width_;
};

// Unvalidated multi-channel storage. Used directly for gradient fields and
// as the backing store of the validated types below.
template <typename T>
class Grid {
 public:
  Grid(GridShape shape, std::size_t channels, T fill)
      : shape_(shape), channels_(channels),
        values_(shape.pixels() * channels, fill) {}
  Grid(GridShape shape, std::size_t channels, std::vector<T> values);

  const GridShape& shape() const { return shape_; }
  std::size_t channels() const { return channels_; }
  std::size_t pixels() const { return shape_.pixels(); }
  std::size_t size() const { return values_.size(); }

  std::span<const T> values() const { return values_; }
  std::span<T> mutable_values() { return values_; }
  std::span<const T> channel(std::size_t c) const {
    return std::span<const T>(values_).subspan(c * pixels(), pixels());
  }
  std::span<T> mutable_channel(std::size_t c) {
    return std::span<T>(values_).subspan(c * pixels(), pixels());
  }

  T at(std::size_t c, std::size_t row, std::size_t col) const {
    return values_[c * pixels() + shape_.index(row, col)];
  }
  T& at(std::size_t c, std::size_t row, std::size_t col) {
    return values_[c * pixels() + shape_.index(row, col)];
  }
  T operator[](std::size_t i) const { return values_[i]; }
  T& operator[](std::size_t i) { return values_[i]; }

  std::vector<T> release() && { return std::move(values_); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  GridShape shape_;
  std::size_t channels_;
  std::vector<T> values_;
};

template <typename T>
Grid<T>::Grid(GridShape shape, std::size_t channels, std::vector<T> values)
    : shape_(shape), channels_(channels), values_(std::move(values)) {
  if (values_.size() != shape_.pixels() * channels_) {
    throw ValidationError("grid expects " +
                          std::to_string(shape_.pixels() * channels_) +
                          " values, got " + std::to_string(values_.size()));
  }
}

// Real-valued gradient field with the shape of the quantity it
// differentiates.
using Field = Grid<double>;

namespace detail {

// Read-only view shared by the validated grid types.
template <typename T>
class ValidatedGrid {
 public:
  const GridShape& shape() const { return grid_.shape(); }
  std::size_t pixels() const { return grid_.pixels(); }
  std::span<const T> values() const { return grid_.values(); }
  const Grid<T>& grid() const { return grid_; }

  friend bool operator==(const ValidatedGrid&, const ValidatedGrid&) = default;

 protected:
  explicit ValidatedGrid(Grid<T> grid) : grid_(std::move(grid)) {}
  Grid<T> grid_;
};

}  // namespace detail

// Normalized intensity slice. Values must be finite.
class Image : public detail::ValidatedGrid<double> {
 public:
  Image(GridShape shape, std::vector<double> values);
  static Image Filled(GridShape shape, double value);

  double at(std::size_t row, std::size_t col) const {
    return grid_.at(0, row, col);
  }
  double operator[](std::size_t i) const { return grid_[i]; }
};

// Per-pixel probability field with values in [0, 1].
class ProbMap : public detail::ValidatedGrid<double> {
 public:
  ProbMap(GridShape shape, std::vector<double> values);
  static ProbMap Filled(GridShape shape, double value);

  double at(std::size_t row, std::size_t col) const {
    return grid_.at(0, row, col);
  }
  double operator[](std::size_t i) const { return grid_[i]; }
};

// Finite per-(class, pixel) logits.
class LogitStack : public detail::ValidatedGrid<double> {
 public:
  LogitStack(GridShape shape, std::size_t classes, std::vector<double> values);

  std::size_t classes() const { return grid_.channels(); }
  std::span<const double> channel(std::size_t c) const {
    return grid_.channel(c);
  }
  double at(std::size_t c, std::size_t row, std::size_t col) const {
    return grid_.at(c, row, col);
  }
};

// Per-pixel class distribution: entries in [0, 1], summing to 1 per pixel
// within kProbSumTolerance.
class ProbStack : public detail::ValidatedGrid<double> {
 public:
  static constexpr double kProbSumTolerance = 1e-6;

  ProbStack(GridShape shape, std::size_t classes, std::vector<double> values);

  std::size_t classes() const { return grid_.channels(); }
  std::span<const double> channel(std::size_t c) const {
    return grid_.channel(c);
  }
  double at(std::size_t c, std::size_t row, std::size_t col) const {
    return grid_.at(c, row, col);
  }
};

// Class index per pixel, each in [0, classes).
class LabelMap : public detail::ValidatedGrid<std::uint8_t> {
 public:
  LabelMap(GridShape shape, std::size_t classes,
           std::vector<std::uint8_t> values);

  std::size_t classes() const { return classes_; }
  std::uint8_t at(std::size_t row, std::size_t col) const {
    return grid_.at(0, row, col);
  }
  std::uint8_t operator[](std::size_t i) const { return grid_[i]; }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;

 private:
  std::size_t classes_;
};

// 0/1 indicator per pixel.
class BinaryMask : public detail::ValidatedGrid<std::uint8_t> {
 public:
  BinaryMask(GridShape shape, std::vector<std::uint8_t> values);
  static BinaryMask Filled(GridShape shape, bool value);

  bool at(std::size_t row, std::size_t col) const {
    return grid_.at(0, row, col) != 0;
  }
  bool operator[](std::size_t i) const { return grid_[i] != 0; }
  std::size_t count() const;
};

// Softmax over the class axis, stabilized by the per-pixel max logit.
ProbStack softmax_pixelwise(const LogitStack& logits);

// Pullback of a gradient with respect to softmax probabilities onto the
// logits: dL/dz_c = p_c * (dL/dp_c - sum_k p_k dL/dp_k), per pixel.
Field softmax_backward(const ProbStack& probs, const Field& grad_probs);

// Per-pixel argmax over classes; ties go to the lowest class index.
LabelMap argmax_labels(const ProbStack& probs);

// 1 - P(background_class) per pixel.
ProbMap infarct_probability(const ProbStack& probs,
                            std::size_t background_class = 0);

// Mask of pixels whose label is not `background_class`.
BinaryMask foreground_mask(const LabelMap& labels,
                           std::size_t background_class = 0);

// Mirror along the vertical axis (column c -> W - 1 - c).
Image flip_horizontal(const Image& image);
ProbMap flip_horizontal(const ProbMap& map);
LabelMap flip_horizontal(const LabelMap& labels);
BinaryMask flip_horizontal(const BinaryMask& mask);

}  // namespace tagl

#endif  // TAGL_GRID_H_
