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

// Quantization and probability models for the latents.
//
// y is coded under a per-element Gaussian whose mean and scale come from the
// hyper decoder; z is coded under a learned per-channel CDF. Both are
// evaluated as the probability mass of the unit-width bin around the value,
// i.e. the density convolved with Uniform(-1/2, 1/2).

#pragma once

#include <span>
#include <string>
#include <vector>

#include "ropc/diff.hpp"

namespace ropc {

enum class QuantMode { kTrain, kEval };

inline constexpr double kMassFloor = 1e-9;

// Round half away from zero.
inline double round_half_away(double x) { return std::round(x); }

// Uniform(-1/2, 1/2) noise of the given shape.
template <typename T>
Mat<T> uniform_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng);

// Train: x + noise (identity gradient). Eval: rounded copy, no gradient.
template <typename T>
Var<T> quantize(Tape<T>& tape, const Var<T>& x, QuantMode mode, Rng* rng);

// x + noise with a caller-provided noise matrix.
template <typename T>
Var<T> add_noise(Tape<T>& tape, const Var<T>& x, const Mat<T>& noise);

double std_normal_cdf(double x);

// Phi((v - mu + 1/2) / sigma) - Phi((v - mu - 1/2) / sigma), floored.
double gaussian_mass(double v, double mu, double sigma);

template <typename T>
Var<T> gaussian_mass(Tape<T>& tape, const Var<T>& y_hat, const Var<T>& mu, const Var<T>& sigma);

// Per-channel monotone CDF: three stacked layers 1 -> 3 -> 3 -> 1 with
// softplus-positive matrices, biases and tanh-gated residuals on the first
// two, and a final sigmoid. Parameters per layer k:
//   "<name>.matrix<k>" channels x (out_k * in_k), raw (softplus applied)
//   "<name>.bias<k>"   channels x out_k
//   "<name>.factor<k>" channels x out_k, raw (tanh applied), k < 2
struct FactorizedModel {
  std::string name = "entropy.z";
  Eigen::Index channels = 0;
  double init_scale = 4.0;

  static constexpr int kLayers = 3;
  static constexpr int kWidths[kLayers + 1] = {1, 3, 3, 1};

  void init(ParamStore<float>& params, Rng& rng) const;

  // Logit of the CDF at x for one channel (CDF = sigmoid(logit)).
  template <typename T>
  T logit(const ParamStore<T>& params, Eigen::Index channel, T x) const;

  template <typename T>
  T cdf(const ParamStore<T>& params, Eigen::Index channel, T x) const;

  // Floored bin mass at integer-or-real v; throws on a non-monotone CDF.
  template <typename T>
  T mass(const ParamStore<T>& params, Eigen::Index channel, T v) const;
};

// Bin masses of z (N x channels) under the factorized model.
template <typename T>
Var<T> factorized_mass(Tape<T>& tape, const ParamStore<T>& params, const FactorizedModel& model,
                       const Var<T>& z_hat);

// -sum log2(p) as a 1x1 result.
template <typename T>
Var<T> estimate_rate(Tape<T>& tape, const Var<T>& masses);

double estimate_rate(std::span<const double> masses);

}  // namespace ropc
