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
#include "tagl/tagl.h"

#include <cmath>
#include <string>

namespace tagl {
namespace {

void RequireSameShape(const ProbMap& a, const ProbMap& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ValidationError(std::string(what) +
                          ": BG and SG maps must have identical shapes");
  }
}

void RequireTau(double tau) {
  if (!(tau >= 0.0 && tau < 1.0)) {
    throw ValidationError("gate threshold tau must lie in [0, 1), got " +
                          std::to_string(tau));
  }
}

double Sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

void TaglConfig::validate() const {
  RequireTau(tau);
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ValidationError("TaglConfig: lambda must be finite and >= 0");
  }
}

BinaryMask gate(const ProbMap& p_bg, double tau) {
  RequireTau(tau);
  std::vector<std::uint8_t> g(p_bg.pixels());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = p_bg[i] > tau ? 1 : 0;
  return BinaryMask(p_bg.shape(), std::move(g));
}

double slice_confidence(const ProbMap& p) {
  double sum = 0.0;
  for (double v : p.values()) sum += v;
  return sum / static_cast<double>(p.pixels());
}

double adaptive_weight(double c_bg, double c_sg) {
  if (!std::isfinite(c_bg) || !std::isfinite(c_sg)) {
    throw ValidationError("adaptive_weight: confidences must be finite");
  }
  const double x = c_bg - c_sg;
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

TaglBreakdown tagl_loss(const ProbMap& p_bg, const ProbMap& p_sg,
                        const TaglConfig& cfg) {
  cfg.validate();
  RequireSameShape(p_bg, p_sg, "tagl_loss");
  BinaryMask g = gate(p_bg, cfg.tau);
  const double c_bg = slice_confidence(p_bg);
  const double c_sg = slice_confidence(p_sg);
  const double q = cfg.adaptive_weight_enabled ? adaptive_weight(c_bg, c_sg)
                                               : 1.0;
  const std::size_t n = p_bg.pixels();
  std::vector<double> penalty(n, 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (g[i]) {
      penalty[i] = q * std::abs(p_sg[i] - p_bg[i]);
      sum += penalty[i];
    }
  }
  const double loss = sum / static_cast<double>(n);
  return TaglBreakdown{std::move(g), c_bg, c_sg, q,
                       ProbMap(p_bg.shape(), std::move(penalty)), loss};
}

TaglGradient tagl_grad(const ProbMap& p_bg, const ProbMap& p_sg,
                       const TaglConfig& cfg) {
  cfg.validate();
  RequireSameShape(p_bg, p_sg, "tagl_grad");
  const std::size_t n = p_bg.pixels();
  const double inv_n = 1.0 / static_cast<double>(n);

  double q = 1.0;
  double dq_scale = 0.0;  // (S / HW) * q (1 - q) / HW
  if (cfg.adaptive_weight_enabled) {
    q = adaptive_weight(slice_confidence(p_bg), slice_confidence(p_sg));
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (p_bg[i] > cfg.tau) s += std::abs(p_sg[i] - p_bg[i]);
    }
    dq_scale = s * inv_n * q * (1.0 - q) * inv_n;
  }

  TaglGradient out{Field(p_bg.shape(), 1, 0.0), Field(p_sg.shape(), 1, 0.0)};
  for (std::size_t i = 0; i < n; ++i) {
    double direct = 0.0;
    if (p_bg[i] > cfg.tau) direct = inv_n * q * Sign(p_sg[i] - p_bg[i]);
    out.grad_sg[i] = direct - dq_scale;
    out.grad_bg[i] = -direct + dq_scale;
  }
  return out;
}

TotalLoss total_loss(double seg_loss, const ProbMap& p_bg, const ProbMap& p_sg,
                     const TaglConfig& cfg) {
  const double ta = tagl_loss(p_bg, p_sg, cfg).loss;
  return {seg_loss + cfg.lambda * ta, seg_loss, ta};
}

}  // namespace tagl
