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
#include "tagl/trainer.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "tagl/parallel.h"

namespace tagl {
namespace {

// Substream tags mixed into the training seed.
constexpr std::uint64_t kShuffleStream = 0x53485546464c45ULL;  // "SHUFFLE"
constexpr std::uint64_t kAugmentStream = 0x4155474d454e54ULL;  // "AUGMENT"

struct LevelForward {
  FeatureField features;
  ProbStack probs;
  ProbMap pinf;
};

LevelForward ForwardLevel(const LinearHead& head, const LevelSlice& slice) {
  FeatureField features = extract_features(slice.image, *slice.atlas);
  ProbStack probs = softmax_pixelwise(forward(head, features));
  ProbMap pinf = infarct_probability(probs, 0);
  return {std::move(features), std::move(probs), std::move(pinf)};
}

double PooledSoftDice(const LevelForward& bg, const LevelForward& sg,
                      const PairedCase& pc, double smoothing) {
  const BinaryMask bg_fg = foreground_mask(pc.bg.labels);
  const BinaryMask sg_fg = foreground_mask(pc.sg.labels);
  const ProbMap* probs[] = {&bg.pinf, &sg.pinf};
  const BinaryMask* masks[] = {&bg_fg, &sg_fg};
  return soft_dice_coefficient(probs, masks, smoothing);
}

struct CaseObjective {
  LossDecomposition loss;
  std::vector<double> grad;
  double soft_dice = 0.0;
  double consistency = 1.0;
};

void RequireFiniteLoss(const LossDecomposition& loss, const PairedCase& pc) {
  if (!std::isfinite(loss.total) || !std::isfinite(loss.seg) ||
      !std::isfinite(loss.ta)) {
    throw NumericalError("non-finite loss on case " + pc.case_id +
                         " (seg=" + std::to_string(loss.seg) +
                         ", ta=" + std::to_string(loss.ta) + ")");
  }
}

CaseObjective EvaluateCase(const LinearHead& head, const PairedCase& pc,
                           const TrainConfig& cfg, bool need_grad) {
  const LevelForward bg = ForwardLevel(head, pc.bg);
  const LevelForward sg = ForwardLevel(head, pc.sg);
  LossResult seg_bg = seg_loss(cfg.seg_loss, bg.probs, pc.bg.labels);
  LossResult seg_sg = seg_loss(cfg.seg_loss, sg.probs, pc.sg.labels);
  const double lambda = cfg.effective_lambda();

  CaseObjective out;
  out.loss.seg = 0.5 * (seg_bg.loss + seg_sg.loss);
  out.loss.ta = tagl_loss(bg.pinf, sg.pinf, cfg.tagl).loss;
  out.loss.total = out.loss.seg + lambda * out.loss.ta;
  out.soft_dice = PooledSoftDice(bg, sg, pc, cfg.seg_loss.dice_smoothing);
  out.consistency = bg_sg_consistency(bg.pinf, sg.pinf, cfg.tagl.tau);
  RequireFiniteLoss(out.loss, pc);
  if (!need_grad) return out;

  Field grad_bg = std::move(seg_bg.grad);
  Field grad_sg = std::move(seg_sg.grad);
  for (double& g : grad_bg.mutable_values()) g *= 0.5;
  for (double& g : grad_sg.mutable_values()) g *= 0.5;

  if (lambda > 0.0) {
    const TaglGradient tg = tagl_grad(bg.pinf, sg.pinf, cfg.tagl);
    // pinf = 1 - P(background): d/dP0 = -d/dpinf, other classes untouched.
    auto add_tagl = [&](const LevelForward& level, const Field& grad_pinf,
                        Field& grad_logits) {
      Field grad_probs(level.probs.shape(), level.probs.classes(), 0.0);
      auto g0 = grad_probs.mutable_channel(0);
      for (std::size_t i = 0; i < g0.size(); ++i) {
        g0[i] = -lambda * grad_pinf[i];
      }
      const Field pulled = softmax_backward(level.probs, grad_probs);
      for (std::size_t i = 0; i < pulled.size(); ++i) {
        grad_logits[i] += pulled[i];
      }
    };
    if (!cfg.detach_bg) add_tagl(bg, tg.grad_bg, grad_bg);
    add_tagl(sg, tg.grad_sg, grad_sg);
  }

  out.grad = head_gradient(bg.features, grad_bg, head.classes());
  const std::vector<double> g_sg =
      head_gradient(sg.features, grad_sg, head.classes());
  for (std::size_t k = 0; k < out.grad.size(); ++k) {
    out.grad[k] += g_sg[k];
    if (!std::isfinite(out.grad[k])) {
      throw NumericalError("non-finite gradient on case " + pc.case_id);
    }
  }
  return out;
}

// Fused CE path: one pass per level computes logits, softmax, CE and the
// infarct map; a second pass forms the logit gradient and accumulates the
// head gradient. Every expression mirrors the unfused path term by term, so
// both agree bit for bit.
struct FusedLevel {
  FeatureField features;
  std::vector<double> probs;  // classes x n, channel-outermost
  std::vector<double> pinf;
  double ce = 0.0;
};

constexpr std::size_t kC = kAspectsClasses;
constexpr std::size_t kT = static_cast<std::size_t>(kTerritoryCount) + 1;

FusedLevel FusedForward(const LinearHead& head, const LevelSlice& slice) {
  FusedLevel out{extract_features(slice.image, *slice.atlas), {}, {}, 0.0};
  const std::size_t n = out.features.pixels();
  const auto x = out.features.intensity();
  const auto contra = out.features.contralateral();
  const auto terr = out.features.territory();
  out.probs.resize(kC * n);
  out.pinf.resize(n);
  // Weights hoisted into class-contiguous rows.
  double wx[kC], wc[kC], wb[kC];
  double wt[kT][kC] = {};
  for (std::size_t c = 0; c < kC; ++c) {
    wx[c] = head.at(kIntensityChannel, c);
    wc[c] = head.at(kContralateralChannel, c);
    wb[c] = head.at(kBiasChannel, c);
    for (std::size_t t = 1; t < kT; ++t) wt[t][c] = head.at(kTerritoryChannel0 + t - 1, c);
  }
  double* probs = out.probs.data();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i], ci = contra[i];
    const std::size_t ti = terr[i];
    double z[kC];
    if (ti != 0) {
      for (std::size_t c = 0; c < kC; ++c) {
        double acc = 0.0 + wx[c] * xi;
        acc += wc[c] * ci;
        acc += wt[ti][c];
        z[c] = acc + wb[c];
      }
    } else {
      for (std::size_t c = 0; c < kC; ++c) {
        double acc = 0.0 + wx[c] * xi;
        acc += wc[c] * ci;
        z[c] = acc + wb[c];
      }
    }
    double zmax = z[0];
    for (std::size_t c = 1; c < kC; ++c) zmax = std::max(zmax, z[c]);
    double sum = 0.0;
    for (std::size_t c = 0; c < kC; ++c) {
      z[c] = std::exp(z[c] - zmax);
      sum += z[c];
    }
    const double inv = 1.0 / sum;
    for (std::size_t c = 0; c < kC; ++c) probs[c * n + i] = z[c] * inv;
    const std::size_t t = slice.labels[i];
    loss -= std::log(std::max(probs[t * n + i], std::numeric_limits<double>::min()));
    out.pinf[i] = std::clamp(1.0 - probs[i], 0.0, 1.0);
  }
  out.ce = loss * (1.0 / static_cast<double>(n));
  return out;
}

template <bool kTagl>
void FusedBackwardLoop(const FusedLevel& level, const LevelSlice& slice,
                       std::span<const double> grad_pinf, double lambda,
                       double (&gx)[kC], double (&gc)[kC], double (&gb)[kC],
                       double (&gt)[kT][kC]) {
  const std::size_t n = level.features.pixels();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto x = level.features.intensity();
  const auto contra = level.features.contralateral();
  const auto terr = level.features.territory();
  const double* p = level.probs.data();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = slice.labels[i];
    const double xi = x[i], ci = contra[i];
    double* gti = gt[terr[i]];
    double gp0 = 0.0, dot = 0.0;
    if constexpr (kTagl) {
      gp0 = -lambda * grad_pinf[i];
      // Only the background channel carries a probability gradient, so the
      // pullback dot product reduces to its first term.
      dot = p[i] * gp0;
    }
    for (std::size_t c = 0; c < kC; ++c) {
      const double pc = p[c * n + i];
      double g = (pc - (c == t ? 1.0 : 0.0)) * inv_n;
      g *= 0.5;
      if constexpr (kTagl) g += pc * ((c == 0 ? gp0 : 0.0) - dot);
      gx[c] += g * xi;
      gc[c] += g * ci;
      gti[c] += g;
      gb[c] += g;
    }
  }
}

// Adds d(0.5 * CE + lambda * TA)/dW for one level to `grad`. `grad_pinf` is
// empty when the TAGL term does not reach this level.
void FusedBackward(const FusedLevel& level, const LevelSlice& slice,
                   std::span<const double> grad_pinf, double lambda,
                   std::vector<double>& grad) {
  double gx[kC] = {}, gc[kC] = {}, gb[kC] = {};
  double gt[kT][kC] = {};
  if (grad_pinf.empty()) {
    FusedBackwardLoop<false>(level, slice, grad_pinf, lambda, gx, gc, gb, gt);
  } else {
    FusedBackwardLoop<true>(level, slice, grad_pinf, lambda, gx, gc, gb, gt);
  }
  std::vector<double> level_grad(kFeatureCount * kC, 0.0);
  for (std::size_t c = 0; c < kC; ++c) {
    level_grad[kIntensityChannel * kC + c] = gx[c];
    level_grad[kContralateralChannel * kC + c] = gc[c];
    level_grad[kBiasChannel * kC + c] = gb[c];
    for (std::size_t t = 1; t < kT; ++t) {
      level_grad[(kTerritoryChannel0 + t - 1) * kC + c] = gt[t][c];
    }
  }
  if (grad.empty()) {
    grad = std::move(level_grad);
  } else {
    for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += level_grad[k];
  }
}

CaseObjective FusedCase(const LinearHead& head, const PairedCase& pc,
                        const TrainConfig& cfg, bool need_grad) {
  const FusedLevel bg = FusedForward(head, pc.bg);
  const FusedLevel sg = FusedForward(head, pc.sg);
  const ProbMap bg_pinf(pc.bg.image.shape(), bg.pinf);
  const ProbMap sg_pinf(pc.sg.image.shape(), sg.pinf);
  const double lambda = cfg.effective_lambda();

  CaseObjective out;
  out.loss.seg = 0.5 * (bg.ce + sg.ce);
  out.loss.ta = tagl_loss(bg_pinf, sg_pinf, cfg.tagl).loss;
  out.loss.total = out.loss.seg + lambda * out.loss.ta;
  {
    const BinaryMask bg_fg = foreground_mask(pc.bg.labels);
    const BinaryMask sg_fg = foreground_mask(pc.sg.labels);
    const ProbMap* probs[] = {&bg_pinf, &sg_pinf};
    const BinaryMask* masks[] = {&bg_fg, &sg_fg};
    out.soft_dice =
        soft_dice_coefficient(probs, masks, cfg.seg_loss.dice_smoothing);
  }
  out.consistency = bg_sg_consistency(bg_pinf, sg_pinf, cfg.tagl.tau);
  RequireFiniteLoss(out.loss, pc);
  if (!need_grad) return out;

  std::span<const double> g_bg, g_sg;
  std::optional<TaglGradient> tg;
  if (lambda > 0.0) {
    tg = tagl_grad(bg_pinf, sg_pinf, cfg.tagl);
    if (!cfg.detach_bg) g_bg = tg->grad_bg.values();
    g_sg = tg->grad_sg.values();
  }
  FusedBackward(bg, pc.bg, g_bg, lambda, out.grad);
  FusedBackward(sg, pc.sg, g_sg, lambda, out.grad);
  for (double g : out.grad) {
    if (!std::isfinite(g)) {
      throw NumericalError("non-finite gradient on case " + pc.case_id);
    }
  }
  return out;
}

bool UseFusedPath(const LinearHead& head, const TrainConfig& cfg) {
  return cfg.seg_loss.kind == SegLossKind::kCE &&
         head.features() == kFeatureCount && head.classes() == kAspectsClasses;
}

ObjectiveResult BatchObjective(const LinearHead& head,
                               std::span<const PairedCase* const> batch,
                               const TrainConfig& cfg, bool need_grad,
                               bool allow_fused) {
  if (batch.empty()) throw ValidationError("objective: empty batch");
  const bool fused = allow_fused && UseFusedPath(head, cfg);
  std::vector<CaseObjective> slots(batch.size());
  parallel_for(batch.size(), cfg.threads, [&](std::size_t i) {
    slots[i] = fused ? FusedCase(head, *batch[i], cfg, need_grad)
                     : EvaluateCase(head, *batch[i], cfg, need_grad);
  });
  // Fixed-order reduction keeps results independent of the thread count.
  ObjectiveResult out;
  if (need_grad) out.grad.assign(head.weights().size(), 0.0);
  for (const CaseObjective& s : slots) {
    out.loss.total += s.loss.total;
    out.loss.seg += s.loss.seg;
    out.loss.ta += s.loss.ta;
    out.soft_dice += s.soft_dice;
    for (std::size_t k = 0; k < s.grad.size(); ++k) out.grad[k] += s.grad[k];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss.total *= inv;
  out.loss.seg *= inv;
  out.loss.ta *= inv;
  out.soft_dice *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

// Per-epoch validation: loss, soft Dice and consistency only. Sums run in
// case order exactly as in evaluate(), so the numbers match it bit for bit.
struct ValidationSummary {
  LossDecomposition loss;
  double soft_dice = 0.0;
  double consistency = 0.0;
};

ValidationSummary Validate(const LinearHead& head,
                           std::span<const PairedCase> cases,
                           const TrainConfig& cfg) {
  const bool fused = UseFusedPath(head, cfg);
  std::vector<CaseObjective> slots(cases.size());
  parallel_for(cases.size(), cfg.threads, [&](std::size_t i) {
    slots[i] = fused ? FusedCase(head, cases[i], cfg, false)
                     : EvaluateCase(head, cases[i], cfg, false);
  });
  ValidationSummary out;
  for (const CaseObjective& s : slots) {
    out.consistency += s.consistency;
    out.soft_dice += s.soft_dice;
    out.loss.total += s.loss.total;
    out.loss.seg += s.loss.seg;
    out.loss.ta += s.loss.ta;
  }
  const double inv = 1.0 / static_cast<double>(cases.size());
  out.consistency *= inv;
  out.soft_dice *= inv;
  out.loss.total *= inv;
  out.loss.seg *= inv;
  out.loss.ta *= inv;
  return out;
}

}  // namespace

std::string_view to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kSGD ? "sgd" : "adam";
}

std::optional<OptimizerKind> parse_optimizer_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return std::tolower(ch); });
  if (lower == "sgd") return OptimizerKind::kSGD;
  if (lower == "adam") return OptimizerKind::kAdam;
  return std::nullopt;
}

void TrainConfig::validate() const {
  seg_loss.validate();
  if (!seg_loss.multiclass()) {
    throw ValidationError(
        "TrainConfig: training uses the 11-class head; seg loss must be ce "
        "or ce_dice");
  }
  tagl.validate();
  if (epochs < 1) throw ValidationError("TrainConfig: epochs must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("TrainConfig: learning_rate must be > 0");
  }
  if (batch == 0) throw ValidationError("TrainConfig: batch must be >= 1");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_epsilon > 0.0)) {
    throw ValidationError("TrainConfig: invalid Adam hyperparameters");
  }
  if (!(std::abs(augment_jitter) <= kMaxJitter)) {
    throw ValidationError("TrainConfig: augment_jitter must be <= 0.05");
  }
}

ObjectiveResult objective_and_gradient(const LinearHead& head,
                                       std::span<const PairedCase* const> batch,
                                       const TrainConfig& cfg) {
  return BatchObjective(head, batch, cfg, true, true);
}

LossDecomposition objective(const LinearHead& head,
                            std::span<const PairedCase* const> batch,
                            const TrainConfig& cfg) {
  return BatchObjective(head, batch, cfg, false, true).loss;
}

ObjectiveResult reference_objective_and_gradient(
    const LinearHead& head, std::span<const PairedCase* const> batch,
    const TrainConfig& cfg) {
  return BatchObjective(head, batch, cfg, true, false);
}

Optimizer::Optimizer(const TrainConfig& cfg, std::size_t parameters)
    : kind_(cfg.optimizer),
      lr_(cfg.learning_rate),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_epsilon),
      m_(parameters, 0.0),
      v_(parameters, 0.0) {}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size()) {
    throw ValidationError("Optimizer: parameter count changed");
  }
  ++steps_;
  if (kind_ == OptimizerKind::kSGD) {
    for (std::size_t k = 0; k < params.size(); ++k) params[k] -= lr_ * grad[k];
    return;
  }
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(beta1_, t);
  const double c2 = 1.0 - std::pow(beta2_, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = beta1_ * m_[k] + (1.0 - beta1_) * grad[k];
    v_[k] = beta2_ * v_[k] + (1.0 - beta2_) * grad[k] * grad[k];
    const double m_hat = m_[k] / c1;
    const double v_hat = v_[k] / c2;
    params[k] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
  }
}

ObjectiveResult train_step(LinearHead& head, Optimizer& optimizer,
                           std::span<const PairedCase* const> batch,
                           const TrainConfig& cfg) {
  ObjectiveResult result = objective_and_gradient(head, batch, cfg);
  optimizer.step(head.mutable_weights(), result.grad);
  return result;
}

CaseEvaluation evaluate_case(const LinearHead& head, const PairedCase& pc,
                             const TrainConfig& cfg,
                             const EvalSettings& settings) {
  const LevelForward bg = ForwardLevel(head, pc.bg);
  const LevelForward sg = ForwardLevel(head, pc.sg);

  ConfusionCounts counts(head.classes());
  counts.accumulate(argmax_labels(bg.probs), pc.bg.labels);
  counts.accumulate(argmax_labels(sg.probs), pc.sg.labels);

  CaseEvaluation out;
  out.case_id = pc.case_id;
  out.report = make_report(counts,
                           bg_sg_consistency(bg.pinf, sg.pinf, cfg.tagl.tau),
                           settings.metrics);
  out.soft_dice = PooledSoftDice(bg, sg, pc, settings.dice_smoothing);
  out.aspects = aspects_score(bg.pinf, *pc.bg.atlas, sg.pinf, *pc.sg.atlas,
                              settings.theta, settings.rule);
  out.truth_score =
      kTerritoryCount - static_cast<int>(pc.truth_involved.size());

  out.loss.seg = 0.5 * (seg_loss(cfg.seg_loss, bg.probs, pc.bg.labels).loss +
                        seg_loss(cfg.seg_loss, sg.probs, pc.sg.labels).loss);
  out.loss.ta = tagl_loss(bg.pinf, sg.pinf, cfg.tagl).loss;
  out.loss.total = out.loss.seg + cfg.effective_lambda() * out.loss.ta;
  RequireFiniteLoss(out.loss, pc);
  return out;
}

SplitEvaluation evaluate(const LinearHead& head,
                         std::span<const PairedCase> cases,
                         const TrainConfig& cfg,
                         const EvalSettings& settings) {
  if (cases.empty()) throw ValidationError("evaluate: empty split");
  SplitEvaluation out;
  out.cases.resize(cases.size());
  parallel_for(cases.size(), cfg.threads, [&](std::size_t i) {
    out.cases[i] = evaluate_case(head, cases[i], cfg, settings);
  });

  const std::size_t classes = head.classes();
  EvalReport& agg = out.aggregate;
  agg.per_class_dice.assign(classes, 0.0);
  agg.per_class_iou.assign(classes, 0.0);
  agg.consistency = 0.0;
  for (const CaseEvaluation& c : out.cases) {
    for (std::size_t k = 0; k < classes; ++k) {
      agg.per_class_dice[k] += c.report.per_class_dice[k];
      agg.per_class_iou[k] += c.report.per_class_iou[k];
    }
    agg.mean_dice += c.report.mean_dice;
    agg.mean_iou += c.report.mean_iou;
    agg.consistency += c.report.consistency;
    out.mean_soft_dice += c.soft_dice;
    out.aspects_mae += std::abs(c.aspects.score - c.truth_score);
    out.mean_loss.total += c.loss.total;
    out.mean_loss.seg += c.loss.seg;
    out.mean_loss.ta += c.loss.ta;
  }
  const double inv = 1.0 / static_cast<double>(cases.size());
  for (std::size_t k = 0; k < classes; ++k) {
    agg.per_class_dice[k] *= inv;
    agg.per_class_iou[k] *= inv;
  }
  agg.mean_dice *= inv;
  agg.mean_iou *= inv;
  agg.consistency *= inv;
  out.mean_soft_dice *= inv;
  out.aspects_mae *= inv;
  out.mean_loss.total *= inv;
  out.mean_loss.seg *= inv;
  out.mean_loss.ta *= inv;
  return out;
}

FitResult fit(const TrainConfig& cfg, std::span<const PairedCase> train,
              std::span<const PairedCase> val, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train.empty()) throw ValidationError("fit: empty training split");
  if (val.empty()) throw ValidationError("fit: empty validation split");

  LinearHead head = LinearHead::Zeros();
  Optimizer optimizer(cfg, head.weights().size());
  std::mt19937_64 shuffle_rng(case_stream_seed(cfg.seed, kShuffleStream));
  std::mt19937_64 augment_rng(case_stream_seed(cfg.seed, kAugmentStream));
  std::uniform_real_distribution<double> jitter(-cfg.augment_jitter,
                                                cfg.augment_jitter);
  std::bernoulli_distribution flip(0.5);

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  FitResult result;
  bool have_best = false;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord record;
    record.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      std::vector<PairedCase> augmented;
      std::vector<const PairedCase*> batch;
      if (cfg.augment) {
        augmented.reserve(stop - start);
        for (std::size_t k = start; k < stop; ++k) {
          const bool f = flip(augment_rng);
          const double j = jitter(augment_rng);
          augmented.push_back(augment(train[order[k]], f, j));
        }
        for (const PairedCase& pc : augmented) batch.push_back(&pc);
      } else {
        for (std::size_t k = start; k < stop; ++k) {
          batch.push_back(&train[order[k]]);
        }
      }
      const ObjectiveResult step = train_step(head, optimizer, batch, cfg);
      const double w = static_cast<double>(batch.size());
      record.train_loss.total += w * step.loss.total;
      record.train_loss.seg += w * step.loss.seg;
      record.train_loss.ta += w * step.loss.ta;
      record.train_dice += w * step.soft_dice;
    }
    const double inv = 1.0 / static_cast<double>(train.size());
    record.train_loss.total *= inv;
    record.train_loss.seg *= inv;
    record.train_loss.ta *= inv;
    record.train_dice *= inv;

    const ValidationSummary v = Validate(head, val, cfg);
    record.val_loss = v.loss;
    record.val_dice = v.soft_dice;
    record.val_consistency = v.consistency;
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);

    if (!have_best || record.val_dice > result.best.val_mean_dice) {
      result.best = CheckpointRecord{epoch, head, record.val_dice,
                                     record.val_consistency};
      have_best = true;
    }
  }
  return result;
}

std::vector<AblationVariant> default_ablation_matrix() {
  return {{"ce_only", false, true},
          {"ce_tagl", true, true},
          {"ce_tagl_fixed_q", true, false}};
}

std::vector<AblationRow> run_ablation(const AblationSettings& settings,
                                      std::span<const AblationVariant> variants,
                                      std::span<const std::uint64_t> seeds,
                                      const AblationCallback& on_row) {
  if (seeds.empty()) throw ValidationError("run_ablation: need at least one seed");
  std::vector<AblationRow> rows;
  for (std::uint64_t seed : seeds) {
    PhantomConfig phantom = settings.phantom;
    phantom.seed = seed;
    const Dataset ds =
        generate_dataset(phantom, settings.n_train, settings.n_val,
                         settings.n_test, settings.train.threads);
    for (const AblationVariant& variant : variants) {
      TrainConfig cfg = settings.train;
      cfg.seed = seed;
      cfg.tagl_enabled = variant.tagl_enabled;
      cfg.tagl.adaptive_weight_enabled = variant.adaptive_weight;
      const FitResult fitted = fit(cfg, ds.train, ds.val);
      EvalSettings eval = settings.eval;
      eval.dice_smoothing = cfg.seg_loss.dice_smoothing;
      const SplitEvaluation test = evaluate(fitted.best.head, ds.test, cfg, eval);
      AblationRow row;
      row.config = variant.name;
      row.seed = seed;
      row.test_mean_dice = test.aggregate.mean_dice;
      row.test_mean_iou = test.aggregate.mean_iou;
      row.test_consistency = test.aggregate.consistency;
      row.aspects_mae = test.aspects_mae;
      row.best_epoch = fitted.best.epoch;
      row.val_mean_dice = fitted.best.val_mean_dice;
      rows.push_back(row);
      if (on_row) on_row(row);
    }
  }
  return rows;
}

double ablation_dice_delta(std::span<const AblationRow> rows,
                           std::string_view with, std::string_view without) {
  double sum_with = 0.0, sum_without = 0.0;
  std::size_t n_with = 0, n_without = 0;
  for (const AblationRow& r : rows) {
    if (r.config == with) {
      sum_with += r.test_mean_dice;
      ++n_with;
    } else if (r.config == without) {
      sum_without += r.test_mean_dice;
      ++n_without;
    }
  }
  if (n_with == 0 || n_without == 0) {
    throw ValidationError("ablation_dice_delta: missing configuration rows");
  }
  return sum_with / static_cast<double>(n_with) -
         sum_without / static_cast<double>(n_without);
}

}  // namespace tagl
