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
#include "tagl/losses.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

namespace tagl {
namespace {

void RequireSameShape(const GridShape& a, const GridShape& b,
                      const char* what) {
  if (a != b) {
    throw ValidationError(std::string(what) + ": shape mismatch (" +
                          std::to_string(a.height()) + "x" +
                          std::to_string(a.width()) + " vs " +
                          std::to_string(b.height()) + "x" +
                          std::to_string(b.width()) + ")");
  }
}

void RequireClassMatch(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ValidationError(std::string(what) + ": class count mismatch (" +
                          std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

// Soft Dice on raw spans; accumulates d(loss)/dp into grad scaled by `scale`.
double SoftDiceInto(std::span<const double> p, auto&& is_target,
                    double smoothing, std::span<double> grad, double scale) {
  double inter = 0.0, sum_p = 0.0, sum_t = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double t = is_target(i) ? 1.0 : 0.0;
    inter += p[i] * t;
    sum_p += p[i];
    sum_t += t;
  }
  const double num = 2.0 * inter + smoothing;
  const double den = sum_p + sum_t + smoothing;
  if (den == 0.0) {
    // s = 0 with empty prediction and target: treat as a perfect match.
    return 0.0;
  }
  // loss = 1 - num/den; d/dp_i = -(2 t_i den - num) / den^2.
  const double inv_den2 = 1.0 / (den * den);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double t = is_target(i) ? 1.0 : 0.0;
    grad[i] += scale * -(2.0 * t * den - num) * inv_den2;
  }
  return 1.0 - num / den;
}

}  // namespace

std::string_view to_string(SegLossKind kind) {
  switch (kind) {
    case SegLossKind::kCE: return "ce";
    case SegLossKind::kBCE: return "bce";
    case SegLossKind::kDice: return "dice";
    case SegLossKind::kBceDice: return "bce_dice";
    case SegLossKind::kCeDice: return "ce_dice";
  }
  return "unknown";
}

std::optional<SegLossKind> parse_seg_loss_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  std::replace(lower.begin(), lower.end(), '-', '_');
  for (SegLossKind k : {SegLossKind::kCE, SegLossKind::kBCE, SegLossKind::kDice,
                        SegLossKind::kBceDice, SegLossKind::kCeDice}) {
    if (to_string(k) == lower) return k;
  }
  return std::nullopt;
}

void SegLossSpec::validate() const {
  if (!(dice_smoothing >= 0.0) || !std::isfinite(dice_smoothing)) {
    throw ValidationError("SegLossSpec: dice_smoothing must be >= 0");
  }
  if (!(bce_dice_mix >= 0.0 && bce_dice_mix <= 1.0)) {
    throw ValidationError("SegLossSpec: bce_dice_mix must lie in [0, 1]");
  }
}

LossResult cross_entropy(const LogitStack& logits, const LabelMap& target) {
  return cross_entropy(softmax_pixelwise(logits), target);
}

LossResult cross_entropy(const ProbStack& probs, const LabelMap& target) {
  RequireSameShape(probs.shape(), target.shape(), "cross_entropy");
  RequireClassMatch(probs.classes(), target.classes(), "cross_entropy");
  const std::size_t n = probs.pixels();
  const std::size_t classes = probs.classes();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto p = probs.values();
  Field grad(probs.shape(), classes, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = target[i];
    const double pt = std::max(p[t * n + i], std::numeric_limits<double>::min());
    loss -= std::log(pt);
    for (std::size_t c = 0; c < classes; ++c) {
      grad[c * n + i] = (p[c * n + i] - (c == t ? 1.0 : 0.0)) * inv_n;
    }
  }
  return {loss * inv_n, std::move(grad)};
}

LossResult binary_cross_entropy(const ProbMap& prob, const BinaryMask& target) {
  RequireSameShape(prob.shape(), target.shape(), "binary_cross_entropy");
  const std::size_t n = prob.pixels();
  const double inv_n = 1.0 / static_cast<double>(n);
  Field grad(prob.shape(), 1, 0.0);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(prob[i], kBceClip, 1.0 - kBceClip);
    const double t = target[i] ? 1.0 : 0.0;
    loss -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    grad[i] = (p - t) / (p * (1.0 - p)) * inv_n;
  }
  return {loss * inv_n, std::move(grad)};
}

LossResult soft_dice_loss(const ProbMap& prob, const BinaryMask& target,
                          double smoothing) {
  RequireSameShape(prob.shape(), target.shape(), "soft_dice_loss");
  if (!(smoothing >= 0.0)) {
    throw ValidationError("soft_dice_loss: smoothing must be >= 0");
  }
  Field grad(prob.shape(), 1, 0.0);
  const double loss =
      SoftDiceInto(prob.values(), [&](std::size_t i) { return target[i]; },
                   smoothing, grad.mutable_values(), 1.0);
  return {loss, std::move(grad)};
}

LossResult multiclass_soft_dice_loss(const ProbStack& probs,
                                     const LabelMap& target, double smoothing) {
  RequireSameShape(probs.shape(), target.shape(), "multiclass_soft_dice_loss");
  RequireClassMatch(probs.classes(), target.classes(),
                    "multiclass_soft_dice_loss");
  if (!(smoothing >= 0.0)) {
    throw ValidationError("multiclass_soft_dice_loss: smoothing must be >= 0");
  }
  const std::size_t classes = probs.classes();
  const double scale = 1.0 / static_cast<double>(classes);
  Field grad(probs.shape(), classes, 0.0);
  double loss = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    loss += SoftDiceInto(
        probs.channel(c), [&](std::size_t i) { return target[i] == c; },
        smoothing, grad.mutable_channel(c), scale);
  }
  return {loss * scale, std::move(grad)};
}

LossResult seg_loss(const SegLossSpec& spec, const LogitStack& logits,
                    const LabelMap& target) {
  return seg_loss(spec, softmax_pixelwise(logits), target);
}

LossResult seg_loss(const SegLossSpec& spec, const ProbStack& probs,
                    const LabelMap& target) {
  spec.validate();
  if (!spec.multiclass()) {
    throw ValidationError(std::string("seg_loss: kind '") +
                          std::string(to_string(spec.kind)) +
                          "' expects a probability map and binary mask");
  }
  LossResult ce = cross_entropy(probs, target);
  if (spec.kind == SegLossKind::kCE) return ce;

  const double mix = spec.bce_dice_mix;
  LossResult dice = multiclass_soft_dice_loss(probs, target,
                                              spec.dice_smoothing);
  Field dice_logit_grad = softmax_backward(probs, dice.grad);
  Field grad(probs.shape(), probs.classes(), 0.0);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    grad[i] = mix * ce.grad[i] + (1.0 - mix) * dice_logit_grad[i];
  }
  return {mix * ce.loss + (1.0 - mix) * dice.loss, std::move(grad)};
}

LossResult seg_loss(const SegLossSpec& spec, const ProbMap& prob,
                    const BinaryMask& target) {
  spec.validate();
  switch (spec.kind) {
    case SegLossKind::kBCE:
      return binary_cross_entropy(prob, target);
    case SegLossKind::kDice:
      return soft_dice_loss(prob, target, spec.dice_smoothing);
    case SegLossKind::kBceDice: {
      const double mix = spec.bce_dice_mix;
      LossResult bce = binary_cross_entropy(prob, target);
      LossResult dice = soft_dice_loss(prob, target, spec.dice_smoothing);
      Field grad(prob.shape(), 1, 0.0);
      for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i] = mix * bce.grad[i] + (1.0 - mix) * dice.grad[i];
      }
      return {mix * bce.loss + (1.0 - mix) * dice.loss, std::move(grad)};
    }
    default:
      throw ValidationError(std::string("seg_loss: kind '") +
                            std::string(to_string(spec.kind)) +
                            "' expects logits and a label map");
  }
}

}  // namespace tagl
