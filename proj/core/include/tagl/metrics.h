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
#ifndef TAGL_METRICS_H_
#define TAGL_METRICS_H_

#include <cstdint>
#include <vector>

#include "tagl/grid.h"

namespace tagl {

struct ClassCounts {
  std::uint64_t true_positive = 0;
  std::uint64_t false_positive = 0;
  std::uint64_t false_negative = 0;
  std::uint64_t true_negative = 0;

  std::uint64_t total() const {
    return true_positive + false_positive + false_negative + true_negative;
  }
  friend bool operator==(const ClassCounts&, const ClassCounts&) = default;
};

// One-vs-rest counts per class. Counts accumulate across several label-map
// pairs with `accumulate`, so a case spanning two slices scores as one unit.
class ConfusionCounts {
 public:
  explicit ConfusionCounts(std::size_t classes);

  std::size_t classes() const { return per_class_.size(); }
  const ClassCounts& operator[](std::size_t c) const { return per_class_[c]; }
  const std::vector<ClassCounts>& per_class() const { return per_class_; }

  void accumulate(const LabelMap& pred, const LabelMap& target);

 private:
  std::vector<ClassCounts> per_class_;
};

ConfusionCounts confusion(const LabelMap& pred, const LabelMap& target);

struct MetricOptions {
  // When set, classes absent from both prediction and target are left out of
  // the means instead of contributing their empty-empty score of 1.0.
  bool skip_absent_classes = false;
};

// 2TP / (2TP + FP + FN); classes absent from both maps score 1.0.
std::vector<double> dice_per_class(const ConfusionCounts& counts);
// TP / (TP + FP + FN); same empty-empty convention.
std::vector<double> iou_per_class(const ConfusionCounts& counts);

// (2 sum(pt) + s) / (sum(p) + sum(t) + s) == 1 - soft_dice_loss.
double soft_dice_coefficient(const ProbMap& prob, const BinaryMask& target,
                             double smoothing);

// Pooled over several (prob, target) pairs as one case.
double soft_dice_coefficient(std::span<const ProbMap* const> probs,
                             std::span<const BinaryMask* const> targets,
                             double smoothing);

// 1 - mean over pixels with pred_bg > tau of |pred_sg - pred_bg|;
// 1.0 when no pixel is gated.
double bg_sg_consistency(const ProbMap& pred_bg, const ProbMap& pred_sg,
                         double tau);

struct EvalReport {
  std::vector<double> per_class_dice;
  double mean_dice = 0.0;
  std::vector<double> per_class_iou;
  double mean_iou = 0.0;
  double consistency = 1.0;
};

// Folds confusion counts and a consistency score into a report. Means are
// plain arithmetic means of the per-class lists (over present classes only
// when options.skip_absent_classes is set).
EvalReport make_report(const ConfusionCounts& counts, double consistency,
                       const MetricOptions& options = {});

}  // namespace tagl

#endif  // TAGL_METRICS_H_
