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
#ifndef TAGL_TAGL_H_
#define TAGL_TAGL_H_

// Territory-aware gated loss between aligned basal-ganglia (BG) and
// supraganglionic (SG) infarct probability maps.
//
//   g_ij  = 1[p_bg_ij > tau]
//   c_bg  = mean(p_bg),  c_sg = mean(p_sg)
//   q     = exp(c_bg) / (exp(c_bg) + exp(c_sg)) = sigmoid(c_bg - c_sg)
//   d_ij  = |p_sg_ij - p_bg_ij|
//   L     = (1 / HW) * sum_ij g_ij * q * d_ij
//
// The training objective is L_seg + lambda * L.

#include "tagl/grid.h"

namespace tagl {

struct TaglConfig {
  double tau = 0.05;
  double lambda = 1.0;
  // When false, q is fixed to 1 (no confidence weighting).
  bool adaptive_weight_enabled = true;

  void validate() const;
};

struct TaglBreakdown {
  BinaryMask gate;
  double c_bg;
  double c_sg;
  double q;
  // g_ij * q * d_ij.
  ProbMap penalty_map;
  double loss;
};

struct TaglGradient {
  Field grad_bg;
  Field grad_sg;
};

struct TotalLoss {
  double loss;
  double seg;
  double ta;
};

// Strict threshold: a pixel equal to tau is not gated.
BinaryMask gate(const ProbMap& p_bg, double tau);

double slice_confidence(const ProbMap& p);

// Two-way softmax of the slice confidences, evaluated as a sigmoid of their
// difference.
double adaptive_weight(double c_bg, double c_sg);

TaglBreakdown tagl_loss(const ProbMap& p_bg, const ProbMap& p_sg,
                        const TaglConfig& cfg);

// Gradient of tagl_loss wrt both maps. The gate is treated as a constant
// (zero subgradient through the threshold) and sign(0) = 0 at the kink of
// |p_sg - p_bg|. Gradient flows through q unless adaptive weighting is off.
TaglGradient tagl_grad(const ProbMap& p_bg, const ProbMap& p_sg,
                       const TaglConfig& cfg);

// L_seg + lambda * L_TA, keeping both addends for logging.
TotalLoss total_loss(double seg_loss, const ProbMap& p_bg, const ProbMap& p_sg,
                     const TaglConfig& cfg);

}  // namespace tagl

#endif  // TAGL_TAGL_H_
