// Copyright 2026 The ropc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Finite-difference checks of the hand-written backward passes.
//
// The analytic gradient is computed in float; the reference is a central
// difference (f(x + h) - f(x - h)) / 2h with h = step max(1, |x|) evaluated
// in double. The error of one check is the norm-wise relative difference
// over a sample of coordinates drawn from every input tensor.
//
// step defaults to 1e-6. With 1e-3 the stencil often straddles a ReLU kink
// inside the attention MLPs and the reference itself is wrong by ~1e-2.

#pragma once

#include <string>
#include <vector>

#include "ropc/diff.hpp"

namespace ropc {

struct GradcheckOptions {
  int seeds = 20;
  double tolerance = 1e-3;
  int samples_per_tensor = 6;
  double step = 1e-6;
};

struct GradcheckReport {
  std::string suite;
  int seeds = 0;
  int failures = 0;
  double max_error = 0;
  double seconds = 0;

  bool passed() const { return seeds > 0 && failures == 0; }
};

// sparse_conv, sp_trans_block, gaussian_mass, factorized_mass,
// composite_backward, rd_loss, plus softmax attention and ms_ssim.
std::vector<std::string> gradcheck_suites();

GradcheckReport run_gradcheck(const std::string& suite, const GradcheckOptions& options = {});

// Core comparison. `loss` is called as loss(tape, store) for Tape<float> /
// ParamStore<float> and for the double versions, and must return a 1x1
// result built only from entries of the store.
template <typename LossFn>
double gradient_error(const ParamStore<float>& inputs, LossFn&& loss, Rng& rng, const GradcheckOptions& options);

}  // namespace ropc

#include "ropc/gradcheck_impl.hpp"
