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

#include <cmath>

#include <gtest/gtest.h>

#include "support.h"
#include "tagl/error.h"

namespace tagl {
namespace {

using testing::Gen;

constexpr double kLn2 = 0.69314718055994530942;

// Direct per-pixel oracles.
double CeOracle(const LogitStack& z, const LabelMap& t) {
  const std::size_t n = z.pixels();
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double lse = 0.0;
    for (std::size_t c = 0; c < z.classes(); ++c) lse += std::exp(z.values()[c * n + i]);
    sum += std::log(lse) - z.values()[t[i] * n + i];
  }
  return sum / static_cast<double>(n);
}

double BceOracle(const ProbMap& p, const BinaryMask& t) {
  double sum = 0.0;
  for (std::size_t i = 0; i < p.pixels(); ++i) {
    const double q = std::min(std::max(p[i], kBceClip), 1.0 - kBceClip);
    sum += t[i] ? -std::log(q) : -std::log(1.0 - q);
  }
  return sum / static_cast<double>(p.pixels());
}

double DiceOracle(const ProbMap& p, const BinaryMask& t, double s) {
  double pt = 0.0, ps = 0.0, ts = 0.0;
  for (std::size_t i = 0; i < p.pixels(); ++i) {
    pt += p[i] * (t[i] ? 1.0 : 0.0);
    ps += p[i];
    ts += t[i] ? 1.0 : 0.0;
  }
  return 1.0 - (2.0 * pt + s) / (ps + ts + s);
}

TEST(CrossEntropyTest, ZeroLogitsGiveLn2) {
  Gen gen(1);
  const GridShape s(3, 4);
  const LossResult r = cross_entropy(LogitStack(s, 2, std::vector<double>(24, 0.0)),
                                     gen.labels(s, 2));
  EXPECT_NEAR(r.loss, kLn2, 1e-15);
}

TEST(CrossEntropyTest, ConfidentCorrectLogitsGiveZero) {
  const GridShape s(1, 2);
  const LabelMap t(s, 2, {0, 1});
  const LossResult r = cross_entropy(LogitStack(s, 2, {60.0, 0.0, 0.0, 60.0}), t);
  EXPECT_LT(r.loss, 1e-20);
}

TEST(CrossEntropyTest, MatchesOracleAndProbsOverload) {
  Gen gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    const GridShape s = gen.shape(1, 6);
    const std::size_t classes = 2 + gen.index(4);
    const LogitStack z = gen.logits(s, classes);
    const LabelMap t = gen.labels(s, classes);
    const LossResult a = cross_entropy(z, t);
    const LossResult b = cross_entropy(softmax_pixelwise(z), t);
    EXPECT_NEAR(a.loss, CeOracle(z, t), 1e-12);
    EXPECT_NEAR(a.loss, b.loss, 1e-12);
    for (std::size_t k = 0; k < a.grad.size(); ++k) EXPECT_NEAR(a.grad[k], b.grad[k], 1e-15);
  }
}

TEST(CrossEntropyTest, FiniteDifferenceGradient) {
  Gen gen(3);
  const GridShape s(4, 4);
  const double eps = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    const LogitStack z = gen.logits(s, 3);
    const LabelMap t = gen.labels(s, 3);
    const LossResult r = cross_entropy(z, t);
    double worst = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < z.values().size(); ++k) {
      std::vector<double> up(z.values().begin(), z.values().end()), dn = up;
      up[k] += eps;
      dn[k] -= eps;
      const double fd = (cross_entropy(LogitStack(s, 3, up), t).loss -
                         cross_entropy(LogitStack(s, 3, dn), t).loss) / (2 * eps);
      worst = std::max(worst, std::abs(fd - r.grad[k]));
      scale = std::max(scale, std::abs(r.grad[k]));
    }
    EXPECT_LT(worst / scale, 1e-6);
  }
}

TEST(CrossEntropyTest, RejectsMismatch) {
  const GridShape s(2, 2);
  EXPECT_THROW(cross_entropy(LogitStack(s, 2, std::vector<double>(8, 0.0)),
                             LabelMap(GridShape(2, 1), 2, {0, 1})),
               ValidationError);
  EXPECT_THROW(cross_entropy(LogitStack(s, 2, std::vector<double>(8, 0.0)),
                             LabelMap(s, 3, {0, 1, 2, 0})),
               ValidationError);
}

TEST(BinaryCrossEntropyTest, HalfGivesLn2) {
  Gen gen(4);
  const GridShape s(5, 3);
  EXPECT_NEAR(binary_cross_entropy(ProbMap::Filled(s, 0.5), gen.mask(s)).loss, kLn2,
              1e-15);
}

TEST(BinaryCrossEntropyTest, ExactTargetIsNearZero) {
  Gen gen(5);
  const GridShape s(4, 4);
  const BinaryMask t = gen.mask(s);
  std::vector<double> v(s.pixels());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = t[i] ? 1.0 : 0.0;
  EXPECT_LT(binary_cross_entropy(ProbMap(s, v), t).loss, 1e-5);
}

TEST(BinaryCrossEntropyTest, MatchesOracleAndFiniteDifference) {
  Gen gen(6);
  const GridShape s(4, 4);
  const double eps = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    const ProbMap p = gen.prob_map_in(s, 0.1, 0.9);
    const BinaryMask t = gen.mask(s);
    const LossResult r = binary_cross_entropy(p, t);
    EXPECT_NEAR(r.loss, BceOracle(p, t), 1e-12);
    double worst = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < s.pixels(); ++k) {
      std::vector<double> up(p.values().begin(), p.values().end()), dn = up;
      up[k] += eps;
      dn[k] -= eps;
      const double fd =
          (BceOracle(ProbMap(s, up), t) - BceOracle(ProbMap(s, dn), t)) / (2 * eps);
      worst = std::max(worst, std::abs(fd - r.grad[k]));
      scale = std::max(scale, std::abs(r.grad[k]));
    }
    EXPECT_LT(worst / scale, 1e-6);
  }
}

TEST(SoftDiceLossTest, ClosedForms) {
  const GridShape s(2, 2);
  const BinaryMask two(s, {1, 1, 0, 0});
  EXPECT_DOUBLE_EQ(soft_dice_loss(ProbMap::Filled(s, 0.5), two, 0.0).loss, 0.5);
  EXPECT_EQ(soft_dice_loss(ProbMap(s, {1.0, 1.0, 0.0, 0.0}), two, 1.0).loss, 0.0);
  EXPECT_EQ(soft_dice_loss(ProbMap::Filled(s, 0.0), BinaryMask::Filled(s, false), 1.0).loss,
            0.0);
}

TEST(SoftDiceLossTest, MatchesOracleAndFiniteDifference) {
  Gen gen(7);
  const GridShape s(4, 4);
  const double eps = 1e-5;
  for (int trial = 0; trial < 40; ++trial) {
    const ProbMap p = gen.prob_map_in(s, 0.1, 0.9);
    const BinaryMask t = gen.mask(s);
    const double smooth = trial % 2 ? 1.0 : 0.0;
    const LossResult r = soft_dice_loss(p, t, smooth);
    EXPECT_NEAR(r.loss, DiceOracle(p, t, smooth), 1e-12);
    double worst = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < s.pixels(); ++k) {
      std::vector<double> up(p.values().begin(), p.values().end()), dn = up;
      up[k] += eps;
      dn[k] -= eps;
      const double fd =
          (DiceOracle(ProbMap(s, up), t, smooth) - DiceOracle(ProbMap(s, dn), t, smooth)) /
          (2 * eps);
      worst = std::max(worst, std::abs(fd - r.grad[k]));
      scale = std::max(scale, std::abs(r.grad[k]));
    }
    EXPECT_LT(worst / scale, 1e-6);
  }
}

TEST(SegLossTest, BinaryDispatchDegenerateMixes) {
  Gen gen(8);
  const GridShape s(4, 4);
  const ProbMap p = gen.prob_map_in(s, 0.05, 0.95);
  const BinaryMask t = gen.mask(s);
  SegLossSpec spec;
  spec.kind = SegLossKind::kBceDice;
  spec.bce_dice_mix = 1.0;
  EXPECT_EQ(seg_loss(spec, p, t).loss, binary_cross_entropy(p, t).loss);
  spec.bce_dice_mix = 0.0;
  EXPECT_EQ(seg_loss(spec, p, t).loss, soft_dice_loss(p, t, spec.dice_smoothing).loss);
  spec.bce_dice_mix = 0.5;
  EXPECT_NEAR(seg_loss(spec, p, t).loss,
              0.5 * BceOracle(p, t) + 0.5 * DiceOracle(p, t, spec.dice_smoothing), 1e-12);
}

TEST(SegLossTest, OperandKindMismatchIsRejected) {
  Gen gen(9);
  const GridShape s(2, 2);
  SegLossSpec spec;
  spec.kind = SegLossKind::kCE;
  EXPECT_THROW(seg_loss(spec, gen.prob_map(s), gen.mask(s)), ValidationError);
  spec.kind = SegLossKind::kBCE;
  EXPECT_THROW(seg_loss(spec, gen.logits(s, 3), gen.labels(s, 3)), ValidationError);
}

TEST(SegLossTest, CeDiceEqualsWeightedParts) {
  Gen gen(10);
  const GridShape s(3, 3);
  const LogitStack z = gen.logits(s, 4);
  const LabelMap t = gen.labels(s, 4);
  SegLossSpec spec;
  spec.kind = SegLossKind::kCeDice;
  spec.bce_dice_mix = 0.3;
  const double expect =
      0.3 * cross_entropy(z, t).loss +
      0.7 * multiclass_soft_dice_loss(softmax_pixelwise(z), t, spec.dice_smoothing).loss;
  EXPECT_NEAR(seg_loss(spec, z, t).loss, expect, 1e-12);
}

TEST(SegLossSpecTest, ParseAndValidate) {
  EXPECT_EQ(parse_seg_loss_kind("CE_Dice"), SegLossKind::kCeDice);
  EXPECT_FALSE(parse_seg_loss_kind("focal").has_value());
  SegLossSpec spec;
  spec.bce_dice_mix = 1.5;
  EXPECT_THROW(spec.validate(), ValidationError);
  spec.bce_dice_mix = 0.5;
  spec.dice_smoothing = -1.0;
  EXPECT_THROW(spec.validate(), ValidationError);
}

}  // namespace
}  // namespace tagl
