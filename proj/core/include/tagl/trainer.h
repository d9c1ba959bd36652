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
#ifndef TAGL_TRAINER_H_
#define TAGL_TRAINER_H_

// Training and evaluation of the linear head on paired BG/SG cases.
//
// Per case the objective is
//   L = (L_seg(BG) + L_seg(SG)) / 2 + lambda * L_TA(pinf_BG, pinf_SG)
// where pinf = 1 - P(background) from the softmax of each level. A batch
// objective is the mean over its cases.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tagl/aspects.h"
#include "tagl/losses.h"
#include "tagl/metrics.h"
#include "tagl/model.h"
#include "tagl/phantom.h"
#include "tagl/tagl.h"

namespace tagl {

enum class OptimizerKind { kSGD, kAdam };

std::string_view to_string(OptimizerKind kind);
std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name);

struct TrainConfig {
  SegLossSpec seg_loss;
  // Off: the objective is L_seg alone, whatever tagl.lambda says.
  bool tagl_enabled = true;
  TaglConfig tagl;
  int epochs = 50;
  double learning_rate = 0.05;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::size_t batch = 8;
  std::uint64_t seed = 0;
  // Treat the BG map as a constant in the TAGL term.
  bool detach_bg = false;
  // Random horizontal flip (p = 0.5) and a uniform intensity offset in
  // [-augment_jitter, augment_jitter] per training case and epoch.
  bool augment = false;
  double augment_jitter = 0.02;
  std::size_t threads = 1;

  // Weight actually applied to L_TA.
  double effective_lambda() const { return tagl_enabled ? tagl.lambda : 0.0; }
  void validate() const;
};

struct LossDecomposition {
  double total = 0.0;
  double seg = 0.0;
  double ta = 0.0;
};

struct ObjectiveResult {
  LossDecomposition loss;
  // d(total)/dW, LinearHead layout.
  std::vector<double> grad;
  // Mean soft Dice of the infarct maps over the cases, before any update.
  double soft_dice = 0.0;
};

// Loss and analytic head gradient of the batch objective. Throws
// NumericalError naming the case when a loss or gradient is not finite.
ObjectiveResult objective_and_gradient(const LinearHead& head,
                                       std::span<const PairedCase* const> batch,
                                       const TrainConfig& cfg);

// Same result computed through the generic per-stage functions (softmax,
// seg_loss, tagl_grad, softmax_backward, head_gradient). objective_and_gradient
// uses a fused kernel for CE that must agree with this bit for bit.
ObjectiveResult reference_objective_and_gradient(
    const LinearHead& head, std::span<const PairedCase* const> batch,
    const TrainConfig& cfg);

// Loss only; cheaper, used by finite-difference checks and validation.
LossDecomposition objective(const LinearHead& head,
                            std::span<const PairedCase* const> batch,
                            const TrainConfig& cfg);

// Stateful first-order optimizer over a flat parameter vector.
class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg, std::size_t parameters);
  void step(std::span<double> params, std::span<const double> grad);
  std::uint64_t steps() const { return steps_; }

 private:
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  std::uint64_t steps_ = 0;
  std::vector<double> m_, v_;
};

// One optimizer update on `head`; returns the pre-update objective.
ObjectiveResult train_step(LinearHead& head, Optimizer& optimizer,
                           std::span<const PairedCase* const> batch,
                           const TrainConfig& cfg);

struct EvalSettings {
  MetricOptions metrics;
  double theta = kDefaultTheta;
  InvolvementRule rule = InvolvementRule::kMeanProbability;
  double dice_smoothing = 1.0;
};

struct CaseEvaluation {
  std::string case_id;
  // Hard 11-class metrics pooled over both slices of the case.
  EvalReport report;
  // Soft Dice of the infarct maps vs the foreground masks, pooled over both
  // slices. This is the model-selection score.
  double soft_dice = 0.0;
  AspectsResult aspects;
  int truth_score = 10;
  LossDecomposition loss;
};

struct SplitEvaluation {
  std::vector<CaseEvaluation> cases;
  // Per-class and mean values averaged over cases.
  EvalReport aggregate;
  double mean_soft_dice = 0.0;
  double aspects_mae = 0.0;
  LossDecomposition mean_loss;
};

CaseEvaluation evaluate_case(const LinearHead& head, const PairedCase& pc,
                             const TrainConfig& cfg,
                             const EvalSettings& settings = {});

SplitEvaluation evaluate(const LinearHead& head,
                         std::span<const PairedCase> cases,
                         const TrainConfig& cfg,
                         const EvalSettings& settings = {});

struct EpochRecord {
  int epoch = 0;
  LossDecomposition train_loss;
  double train_dice = 0.0;
  LossDecomposition val_loss;
  double val_dice = 0.0;
  double val_consistency = 0.0;
};

struct CheckpointRecord {
  int epoch = 0;
  LinearHead head = LinearHead::Zeros();
  double val_mean_dice = 0.0;
  double val_consistency = 0.0;
};

struct FitResult {
  CheckpointRecord best;
  std::vector<EpochRecord> history;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains from a zero-initialized head. The selected checkpoint has the
// highest validation soft Dice (earliest epoch on ties).
FitResult fit(const TrainConfig& cfg, std::span<const PairedCase> train,
              std::span<const PairedCase> val,
              const EpochCallback& on_epoch = {});

struct AblationVariant {
  std::string name;
  bool tagl_enabled;
  bool adaptive_weight;
};

// CE only; CE + TAGL; CE + TAGL with q fixed to 1.
std::vector<AblationVariant> default_ablation_matrix();

struct AblationRow {
  std::string config;
  std::uint64_t seed = 0;
  double test_mean_dice = 0.0;
  double test_mean_iou = 0.0;
  double test_consistency = 0.0;
  double aspects_mae = 0.0;
  int best_epoch = 0;
  double val_mean_dice = 0.0;
};

struct AblationSettings {
  PhantomConfig phantom;
  TrainConfig train;
  std::size_t n_train = 400;
  std::size_t n_val = 100;
  std::size_t n_test = 100;
  EvalSettings eval;
};

using AblationCallback = std::function<void(const AblationRow&)>;

// For each seed: generate a dataset with phantom.seed = seed, then fit every
// variant with train.seed = seed and score it on the test split. Rows are
// ordered seed-major, variant-minor.
std::vector<AblationRow> run_ablation(const AblationSettings& settings,
                                      std::span<const AblationVariant> variants,
                                      std::span<const std::uint64_t> seeds,
                                      const AblationCallback& on_row = {});

// Mean test Dice of `with` minus that of `without` across the rows.
double ablation_dice_delta(std::span<const AblationRow> rows,
                           std::string_view with, std::string_view without);

}  // namespace tagl

#endif  // TAGL_TRAINER_H_
