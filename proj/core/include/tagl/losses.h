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
#ifndef TAGL_LOSSES_H_
#define TAGL_LOSSES_H_

// Pixel-wise segmentation objectives with analytic gradients.
//
// Every loss is a mean over pixels (or a ratio of pixel sums for Dice), so
// gradients carry the 1/HW factor.

#include <optional>
#include <string>
#include <string_view>

#include "tagl/grid.h"

namespace tagl {

enum class SegLossKind { kCE, kBCE, kDice, kBceDice, kCeDice };

std::string_view to_string(SegLossKind kind);
// Accepts "ce", "bce", "dice", "bce_dice", "ce_dice" (case-insensitive).
std::optional<SegLossKind> parse_seg_loss_kind(std::string_view name);

struct SegLossSpec {
  SegLossKind kind = SegLossKind::kCE;
  double dice_smoothing = 1.0;
  // Weight on the CE/BCE term in the hybrid kinds; Dice gets 1 - mix.
  double bce_dice_mix = 0.5;

  void validate() const;
  // True for kinds that consume logits + labels.
  bool multiclass() const {
    return kind == SegLossKind::kCE || kind == SegLossKind::kCeDice;
  }
};

struct LossResult {
  double loss;
  // Gradient with respect to the loss input (logits for CE variants,
  // probabilities for the binary variants).
  Field grad;
};

// Clamp bound applied to probabilities before the logarithm in BCE.
inline constexpr double kBceClip = 1e-7;

// Mean over pixels of -ln softmax(logits)[target]; gradient wrt logits is
// (softmax - onehot) / HW.
LossResult cross_entropy(const LogitStack& logits, const LabelMap& target);

// Same loss, from an already computed softmax. Avoids a second softmax when
// the caller needs the probabilities anyway.
LossResult cross_entropy(const ProbStack& probs, const LabelMap& target);

LossResult binary_cross_entropy(const ProbMap& prob, const BinaryMask& target);

// 1 - (2 sum(pt) + s) / (sum(p) + sum(t) + s). Gradient wrt prob.
LossResult soft_dice_loss(const ProbMap& prob, const BinaryMask& target,
                          double smoothing);

// Mean over all classes (background included) of the soft Dice loss of each
// probability channel against the one-hot target. Gradient wrt probs.
LossResult multiclass_soft_dice_loss(const ProbStack& probs,
                                     const LabelMap& target, double smoothing);

// Dispatch for the multi-class kinds (CE, CE_DICE). Gradient wrt logits.
LossResult seg_loss(const SegLossSpec& spec, const LogitStack& logits,
                    const LabelMap& target);
// Variant reusing a softmax the caller already holds; `probs` must equal
// softmax_pixelwise(logits).
LossResult seg_loss(const SegLossSpec& spec, const ProbStack& probs,
                    const LabelMap& target);

// Dispatch for the binary kinds (BCE, DICE, BCE_DICE). Gradient wrt prob.
LossResult seg_loss(const SegLossSpec& spec, const ProbMap& prob,
                    const BinaryMask& target);

}  // namespace tagl

#endif  // TAGL_LOSSES_H_
