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
#include "tagl/metrics.h"

#include <cmath>
#include <string>

namespace tagl {
namespace {

bool Absent(const ClassCounts& k) {
  return k.true_positive + k.false_positive + k.false_negative == 0;
}

double Mean(const std::vector<double>& values,
            const std::vector<ClassCounts>& counts, bool skip_absent) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t c = 0; c < values.size(); ++c) {
    if (skip_absent && Absent(counts[c])) continue;
    sum += values[c];
    ++n;
  }
  // Every class absent and skipped: nothing to disagree about.
  return n == 0 ? 1.0 : sum / static_cast<double>(n);
}

}  // namespace

ConfusionCounts::ConfusionCounts(std::size_t classes) : per_class_(classes) {
  if (classes == 0) throw ValidationError("ConfusionCounts: zero classes");
}

void ConfusionCounts::accumulate(const LabelMap& pred, const LabelMap& target) {
  if (pred.shape() != target.shape()) {
    throw ValidationError("confusion: prediction/target shape mismatch");
  }
  if (pred.classes() != classes() || target.classes() != classes()) {
    throw ValidationError("confusion: class count mismatch (counts " +
                          std::to_string(classes()) + ", pred " +
                          std::to_string(pred.classes()) + ", target " +
                          std::to_string(target.classes()) + ")");
  }
  // Tally the joint histogram, then derive one-vs-rest counts.
  const std::size_t c_count = classes();
  std::vector<std::uint64_t> joint(c_count * c_count, 0);
  for (std::size_t i = 0; i < pred.pixels(); ++i) {
    ++joint[static_cast<std::size_t>(target[i]) * c_count + pred[i]];
  }
  const std::uint64_t n = pred.pixels();
  for (std::size_t c = 0; c < c_count; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t k = 0; k < c_count; ++k) {
      row += joint[c * c_count + k];
      col += joint[k * c_count + c];
    }
    const std::uint64_t tp = joint[c * c_count + c];
    ClassCounts& out = per_class_[c];
    out.true_positive += tp;
    out.false_negative += row - tp;
    out.false_positive += col - tp;
    out.true_negative += n - row - col + tp;
  }
}

ConfusionCounts confusion(const LabelMap& pred, const LabelMap& target) {
  ConfusionCounts counts(pred.classes());
  counts.accumulate(pred, target);
  return counts;
}

std::vector<double> dice_per_class(const ConfusionCounts& counts) {
  std::vector<double> out;
  out.reserve(counts.classes());
  for (const ClassCounts& k : counts.per_class()) {
    const std::uint64_t den = 2 * k.true_positive + k.false_positive +
                              k.false_negative;
    out.push_back(den == 0 ? 1.0
                           : 2.0 * static_cast<double>(k.true_positive) /
                                 static_cast<double>(den));
  }
  return out;
}

std::vector<double> iou_per_class(const ConfusionCounts& counts) {
  std::vector<double> out;
  out.reserve(counts.classes());
  for (const ClassCounts& k : counts.per_class()) {
    const std::uint64_t den = k.true_positive + k.false_positive +
                              k.false_negative;
    out.push_back(den == 0 ? 1.0
                           : static_cast<double>(k.true_positive) /
                                 static_cast<double>(den));
  }
  return out;
}

double soft_dice_coefficient(const ProbMap& prob, const BinaryMask& target,
                             double smoothing) {
  const ProbMap* p[] = {&prob};
  const BinaryMask* t[] = {&target};
  return soft_dice_coefficient(p, t, smoothing);
}

double soft_dice_coefficient(std::span<const ProbMap* const> probs,
                             std::span<const BinaryMask* const> targets,
                             double smoothing) {
  if (probs.size() != targets.size()) {
    throw ValidationError("soft_dice_coefficient: map/mask count mismatch");
  }
  if (!(smoothing >= 0.0)) {
    throw ValidationError("soft_dice_coefficient: smoothing must be >= 0");
  }
  double inter = 0.0, sum_p = 0.0, sum_t = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    const ProbMap& p = *probs[k];
    const BinaryMask& t = *targets[k];
    if (p.shape() != t.shape()) {
      throw ValidationError("soft_dice_coefficient: shape mismatch");
    }
    for (std::size_t i = 0; i < p.pixels(); ++i) {
      const double ti = t[i] ? 1.0 : 0.0;
      inter += p[i] * ti;
      sum_p += p[i];
      sum_t += ti;
    }
  }
  const double den = sum_p + sum_t + smoothing;
  if (den == 0.0) return 1.0;
  return (2.0 * inter + smoothing) / den;
}

double bg_sg_consistency(const ProbMap& pred_bg, const ProbMap& pred_sg,
                         double tau) {
  if (pred_bg.shape() != pred_sg.shape()) {
    throw ValidationError("bg_sg_consistency: shape mismatch");
  }
  if (!(tau >= 0.0 && tau < 1.0)) {
    throw ValidationError("bg_sg_consistency: tau must lie in [0, 1)");
  }
  double sum = 0.0;
  std::size_t gated = 0;
  for (std::size_t i = 0; i < pred_bg.pixels(); ++i) {
    if (pred_bg[i] > tau) {
      sum += std::abs(pred_sg[i] - pred_bg[i]);
      ++gated;
    }
  }
  if (gated == 0) return 1.0;
  return 1.0 - sum / static_cast<double>(gated);
}

EvalReport make_report(const ConfusionCounts& counts, double consistency,
                       const MetricOptions& options) {
  EvalReport report;
  report.per_class_dice = dice_per_class(counts);
  report.per_class_iou = iou_per_class(counts);
  report.mean_dice = Mean(report.per_class_dice, counts.per_class(),
                          options.skip_absent_classes);
  report.mean_iou = Mean(report.per_class_iou, counts.per_class(),
                         options.skip_absent_classes);
  report.consistency = consistency;
  return report;
}

}  // namespace tagl
