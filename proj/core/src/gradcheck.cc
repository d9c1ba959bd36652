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
#include "tagl/gradcheck.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <random>

#include "tagl/error.h"
#include "tagl/losses.h"
#include "tagl/tagl.h"
#include "tagl/trainer.h"

namespace tagl {
namespace {

// Substream tags, one per suite.
constexpr std::uint64_t kCeStream = 1;
constexpr std::uint64_t kBceStream = 2;
constexpr std::uint64_t kDiceStream = 3;
constexpr std::uint64_t kTaglStream = 4;
constexpr std::uint64_t kE2eStream = 5;

using Rng = std::mt19937_64;

double Uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

std::vector<double> UniformVector(Rng& rng, std::size_t n, double lo,
                                  double hi) {
  std::vector<double> v(n);
  for (double& x : v) x = Uniform(rng, lo, hi);
  return v;
}

BinaryMask RandomMask(Rng& rng, GridShape shape) {
  std::bernoulli_distribution coin(0.5);
  std::vector<std::uint8_t> v(shape.pixels());
  for (auto& x : v) x = coin(rng) ? 1 : 0;
  return BinaryMask(shape, std::move(v));
}

// Central differences of f over every coordinate of x.
std::vector<double> NumericGradient(
    std::vector<double> x, double eps,
    const std::function<double(const std::vector<double>&)>& f) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x[k];
    x[k] = saved + eps;
    const double up = f(x);
    x[k] = saved - eps;
    const double down = f(x);
    x[k] = saved;
    g[k] = (up - down) / (2.0 * eps);
  }
  return g;
}

GridShape TrialShape(const GradcheckConfig& cfg, std::size_t trial) {
  const std::size_t side = cfg.sizes[trial % cfg.sizes.size()];
  return GridShape(side, side);
}

void Record(SuiteResult& r, std::span<const double> analytic,
            std::span<const double> numeric) {
  r.worst_error =
      std::max(r.worst_error, normwise_relative_error(analytic, numeric));
  ++r.trials;
}

std::vector<BinaryMask> RandomTiling(Rng& rng, GridShape shape,
                                     std::size_t territories) {
  const std::size_t n = shape.pixels();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> pick(0, territories);
  std::vector<std::size_t> owner(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    // The first pixels in the shuffled order seed every territory.
    owner[order[k]] = k < territories ? k + 1 : pick(rng);
  }
  std::vector<BinaryMask> masks;
  for (std::size_t t = 1; t <= territories; ++t) {
    std::vector<std::uint8_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = owner[i] == t ? 1 : 0;
    masks.emplace_back(shape, std::move(v));
  }
  return masks;
}

LevelSlice RandomSlice(Rng& rng, GridShape shape, Level level) {
  const std::vector<int> ids = territories_at(level);
  auto atlas = std::make_shared<const TerritoryAtlas>(
      level, RandomTiling(rng, shape, ids.size()));
  std::bernoulli_distribution infarct(0.4);
  std::vector<bool> hit(ids.size());
  for (std::size_t k = 0; k < ids.size(); ++k) hit[k] = infarct(rng);
  const auto index = atlas->index_map();
  std::vector<std::uint8_t> labels(shape.pixels(), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (index[i] == 0) continue;
    const auto pos = std::find(ids.begin(), ids.end(), index[i]) - ids.begin();
    if (hit[static_cast<std::size_t>(pos)]) labels[i] = index[i];
  }
  return LevelSlice{Image(shape, UniformVector(rng, shape.pixels(), 0.2, 0.8)),
                    LabelMap(shape, kAspectsClasses, std::move(labels)),
                    std::move(atlas)};
}

// Infarct maps of a case under `head`; used to keep end-to-end instances
// away from the gate threshold and the |d| kink.
std::pair<ProbMap, ProbMap> InfarctMaps(const LinearHead& head,
                                        const PairedCase& pc) {
  auto level = [&](const LevelSlice& s) {
    return infarct_probability(softmax_pixelwise(
        forward(head, extract_features(s.image, *s.atlas))));
  };
  return {level(pc.bg), level(pc.sg)};
}

bool NearKink(const ProbMap& p_bg, const ProbMap& p_sg, double tau,
              double margin) {
  for (std::size_t i = 0; i < p_bg.pixels(); ++i) {
    if (std::abs(p_bg[i] - tau) <= margin) return true;
    if (p_bg[i] > tau && std::abs(p_sg[i] - p_bg[i]) <= margin) return true;
  }
  return false;
}

}  // namespace

void GradcheckConfig::validate() const {
  if (sizes.empty()) throw ValidationError("gradcheck: need at least one size");
  for (std::size_t s : sizes) {
    if (s < 1) throw ValidationError("gradcheck: sizes must be >= 1");
  }
  if (trials < 1) throw ValidationError("gradcheck: trials must be >= 1");
  if (!(epsilon > 0.0) || !(e2e_epsilon > 0.0)) {
    throw ValidationError("gradcheck: epsilon must be > 0");
  }
  if (!(tolerance > 0.0) || !(e2e_tolerance > 0.0)) {
    throw ValidationError("gradcheck: tolerance must be > 0");
  }
  if (e2e_size < 2) throw ValidationError("gradcheck: e2e size must be >= 2");
  if (!(kink_margin > epsilon)) {
    throw ValidationError("gradcheck: kink margin must exceed epsilon");
  }
}

double normwise_relative_error(std::span<const double> analytic,
                               std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    throw ValidationError("normwise_relative_error: size mismatch");
  }
  double diff = 0.0, scale = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    diff = std::max(diff, std::abs(analytic[k] - numeric[k]));
    scale = std::max({scale, std::abs(analytic[k]), std::abs(numeric[k])});
  }
  if (scale == 0.0) return 0.0;
  return diff / scale;
}

SuiteResult check_cross_entropy(const GradcheckConfig& cfg) {
  cfg.validate();
  SuiteResult r{"cross_entropy", 0, 0.0, cfg.tolerance};
  Rng rng(case_stream_seed(cfg.seed, kCeStream));
  constexpr std::size_t kClasses = 3;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const GridShape shape = TrialShape(cfg, t);
    std::normal_distribution<double> normal(0.0, 2.0);
    std::vector<double> z(kClasses * shape.pixels());
    for (double& v : z) v = normal(rng);
    std::uniform_int_distribution<int> cls(0, kClasses - 1);
    std::vector<std::uint8_t> y(shape.pixels());
    for (auto& v : y) v = static_cast<std::uint8_t>(cls(rng));
    const LabelMap target(shape, kClasses, std::move(y));
    const LossResult a = cross_entropy(LogitStack(shape, kClasses, z), target);
    const auto n = NumericGradient(z, cfg.epsilon, [&](const auto& x) {
      return cross_entropy(LogitStack(shape, kClasses, x), target).loss;
    });
    Record(r, a.grad.values(), n);
  }
  return r;
}

SuiteResult check_binary_cross_entropy(const GradcheckConfig& cfg) {
  cfg.validate();
  SuiteResult r{"binary_cross_entropy", 0, 0.0, cfg.tolerance};
  Rng rng(case_stream_seed(cfg.seed, kBceStream));
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const GridShape shape = TrialShape(cfg, t);
    const auto p = UniformVector(rng, shape.pixels(), 0.1, 0.9);
    const BinaryMask target = RandomMask(rng, shape);
    const LossResult a = binary_cross_entropy(ProbMap(shape, p), target);
    const auto n = NumericGradient(p, cfg.epsilon, [&](const auto& x) {
      return binary_cross_entropy(ProbMap(shape, x), target).loss;
    });
    Record(r, a.grad.values(), n);
  }
  return r;
}

SuiteResult check_soft_dice(const GradcheckConfig& cfg) {
  cfg.validate();
  SuiteResult r{"soft_dice", 0, 0.0, cfg.tolerance};
  Rng rng(case_stream_seed(cfg.seed, kDiceStream));
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const GridShape shape = TrialShape(cfg, t);
    const auto p = UniformVector(rng, shape.pixels(), 0.1, 0.9);
    const BinaryMask target = RandomMask(rng, shape);
    // Alternate the smoothing between the unsmoothed and the default value.
    const double s = t % 2 == 0 ? 1.0 : 0.0;
    const LossResult a = soft_dice_loss(ProbMap(shape, p), target, s);
    const auto n = NumericGradient(p, cfg.epsilon, [&](const auto& x) {
      return soft_dice_loss(ProbMap(shape, x), target, s).loss;
    });
    Record(r, a.grad.values(), n);
  }
  return r;
}

SuiteResult check_tagl(const GradcheckConfig& cfg) {
  cfg.validate();
  SuiteResult r{"tagl", 0, 0.0, cfg.tolerance};
  Rng rng(case_stream_seed(cfg.seed, kTaglStream));
  const double m = cfg.kink_margin;
  for (std::size_t t = 0; t < cfg.trials; ++t) {
    const GridShape shape = TrialShape(cfg, t);
    const std::size_t n_px = shape.pixels();
    TaglConfig tc;
    tc.tau = Uniform(rng, 0.02, 0.5);
    tc.adaptive_weight_enabled = t % 2 == 0;
    std::vector<double> bg(n_px), sg(n_px);
    for (std::size_t i = 0; i < n_px; ++i) {
      // Rejection keeps every pixel off the two nondifferentiable sets and
      // far enough from 0 and 1 for the finite-difference step.
      do {
        bg[i] = Uniform(rng, m, 1.0 - m);
      } while (std::abs(bg[i] - tc.tau) <= m);
      do {
        sg[i] = Uniform(rng, m, 1.0 - m);
      } while (std::abs(sg[i] - bg[i]) <= m);
    }
    const TaglGradient a = tagl_grad(ProbMap(shape, bg), ProbMap(shape, sg), tc);
    const auto n_bg = NumericGradient(bg, cfg.epsilon, [&](const auto& x) {
      return tagl_loss(ProbMap(shape, x), ProbMap(shape, sg), tc).loss;
    });
    const auto n_sg = NumericGradient(sg, cfg.epsilon, [&](const auto& x) {
      return tagl_loss(ProbMap(shape, bg), ProbMap(shape, x), tc).loss;
    });
    std::vector<double> analytic(a.grad_bg.values().begin(),
                                 a.grad_bg.values().end());
    analytic.insert(analytic.end(), a.grad_sg.values().begin(),
                    a.grad_sg.values().end());
    std::vector<double> numeric = n_bg;
    numeric.insert(numeric.end(), n_sg.begin(), n_sg.end());
    Record(r, analytic, numeric);
  }
  return r;
}

PairedCase random_small_case(std::size_t side, std::uint64_t seed) {
  Rng rng(seed);
  const GridShape shape(side, side);
  PairedCase pc{"gradcheck", RandomSlice(rng, shape, Level::kBG),
                RandomSlice(rng, shape, Level::kSG), {}};
  for (const LevelSlice* s : {&pc.bg, &pc.sg}) {
    const auto labels = s->labels.values();
    for (int id : s->atlas->ids()) {
      if (std::find(labels.begin(), labels.end(), id) != labels.end()) {
        pc.truth_involved.push_back(id);
      }
    }
  }
  return pc;
}

std::vector<SuiteResult> check_end_to_end(const GradcheckConfig& cfg) {
  cfg.validate();
  struct Variant {
    std::string name;
    SegLossKind seg;
    bool tagl;
    bool adaptive;
  };
  std::vector<Variant> variants;
  for (const AblationVariant& v : default_ablation_matrix()) {
    variants.push_back({"end_to_end_" + v.name, SegLossKind::kCE,
                        v.tagl_enabled, v.adaptive_weight});
  }
  // The generic (unfused) objective path.
  variants.push_back({"end_to_end_ce_dice_tagl", SegLossKind::kCeDice, true, true});

  std::vector<SuiteResult> out;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    const Variant& v = variants[vi];
    SuiteResult r{v.name, 0, 0.0, cfg.e2e_tolerance};
    Rng rng(case_stream_seed(cfg.seed, kE2eStream + vi));
    TrainConfig tc;
    tc.seg_loss.kind = v.seg;
    tc.tagl_enabled = v.tagl;
    tc.tagl.adaptive_weight_enabled = v.adaptive;
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      PairedCase pc = random_small_case(cfg.e2e_size, rng());
      LinearHead head = LinearHead::Zeros();
      // Redraw case and weights until no pixel sits near a kink of the TAGL
      // term. The case is redrawn too: two slices can share a pixel whose
      // features make both maps agree under any head.
      for (int attempt = 0;; ++attempt) {
        for (double& w : head.mutable_weights()) w = Uniform(rng, -1.0, 1.0);
        // A background bias spreads the infarct maps over (0, 1) instead of
        // crowding them near 1 - 1/C.
        head.at(kBiasChannel, 0) = Uniform(rng, 0.0, 4.0);
        const auto maps = InfarctMaps(head, pc);
        if (!NearKink(maps.first, maps.second, tc.tagl.tau, cfg.kink_margin)) {
          break;
        }
        if (attempt == 1000) {
          throw ValidationError("gradcheck: could not draw a kink-free instance");
        }
        pc = random_small_case(cfg.e2e_size, rng());
      }
      const PairedCase* batch[] = {&pc};
      const ObjectiveResult a = objective_and_gradient(head, batch, tc);
      const std::vector<double> w0(head.weights().begin(), head.weights().end());
      const auto n = NumericGradient(w0, cfg.e2e_epsilon, [&](const auto& x) {
        return objective(LinearHead(head.features(), head.classes(), x), batch, tc)
            .total;
      });
      Record(r, a.grad, n);
    }
    out.push_back(r);
  }
  return out;
}

std::vector<SuiteResult> run_gradcheck(const GradcheckConfig& cfg) {
  std::vector<SuiteResult> out{check_cross_entropy(cfg),
                               check_binary_cross_entropy(cfg),
                               check_soft_dice(cfg), check_tagl(cfg)};
  for (SuiteResult& r : check_end_to_end(cfg)) out.push_back(std::move(r));
  return out;
}

}  // namespace tagl
