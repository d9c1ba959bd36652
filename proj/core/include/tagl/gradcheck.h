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
#ifndef TAGL_GRADCHECK_H_
#define TAGL_GRADCHECK_H_

// Central finite-difference checks of every analytic gradient.
//
// Error per instance is normwise: max_k |a_k - n_k| / max_k max(|a_k|, |n_k|)
// for analytic gradient a and numeric gradient n. An instance whose two
// gradients are both exactly zero scores 0.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tagl/phantom.h"

namespace tagl {

struct GradcheckConfig {
  // Square grid sides; trials cycle over them.
  std::vector<std::size_t> sizes{4, 8};
  // Instances per suite.
  std::size_t trials = 200;
  // Step for the loss suites and its pass threshold.
  double epsilon = 1e-5;
  double tolerance = 1e-5;
  // Step and threshold for the end-to-end head-gradient suites.
  double e2e_epsilon = 1e-4;
  double e2e_tolerance = 1e-4;
  // Side of the synthetic case used end to end.
  std::size_t e2e_size = 8;
  // Pixels this close to the gate threshold or to zero disagreement are
  // resampled before checking.
  double kink_margin = 1e-3;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SuiteResult {
  std::string name;
  std::size_t trials = 0;
  double worst_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return worst_error < tolerance; }
};

double normwise_relative_error(std::span<const double> analytic,
                               std::span<const double> numeric);

SuiteResult check_cross_entropy(const GradcheckConfig& cfg);
SuiteResult check_binary_cross_entropy(const GradcheckConfig& cfg);
SuiteResult check_soft_dice(const GradcheckConfig& cfg);
SuiteResult check_tagl(const GradcheckConfig& cfg);
// Full objective vs every head weight, once per default ablation variant.
std::vector<SuiteResult> check_end_to_end(const GradcheckConfig& cfg);

// All suites in a fixed order.
std::vector<SuiteResult> run_gradcheck(const GradcheckConfig& cfg);

// Random side x side paired case whose atlases tile the grid with every
// territory present, labels filling territories independently.
PairedCase random_small_case(std::size_t side, std::uint64_t seed);

}  // namespace tagl

#endif  // TAGL_GRADCHECK_H_
