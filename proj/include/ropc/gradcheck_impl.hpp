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

#pragma once

#include <algorithm>
#include <cmath>

namespace ropc {

template <typename LossFn>
double gradient_error(const ParamStore<float>& inputs, LossFn&& loss, Rng& rng, const GradcheckOptions& options) {
  // Analytic gradient in float.
  ParamStore<float> pf = inputs.cast<float>();
  {
    Tape<float> tape;
    auto out = loss(tape, pf);
    if (out->value.size() != 1) throw Error("gradcheck: loss must be scalar");
    tape.backward(out);
  }
  // Central differences in double on sampled coordinates.
  ParamStore<double> pd = inputs.cast<double>();
  auto eval = [&]() {
    Tape<double> tape(false);
    return loss(tape, pd)->value(0, 0);
  };
  double diff2 = 0.0, ref2 = 0.0, ana2 = 0.0;
  for (std::size_t t = 0; t < pd.entries().size(); ++t) {
    auto& x = pd.entries()[t].var->value;
    const auto& ga = pf.entries()[t].var->grad;
    const Eigen::Index n = x.size();
    const int k = static_cast<int>(std::min<Eigen::Index>(n, options.samples_per_tensor));
    for (int s = 0; s < k; ++s) {
      const Eigen::Index i = k == n ? s : static_cast<Eigen::Index>(rng.below(static_cast<uint64_t>(n)));
      const double x0 = x.data()[i];
      const double h = options.step * std::max(1.0, std::abs(x0));
      x.data()[i] = x0 + h;
      const double fp = eval();
      x.data()[i] = x0 - h;
      const double fm = eval();
      x.data()[i] = x0;
      const double gfd = (fp - fm) / (2.0 * h);
      const double gan = ga.size() ? static_cast<double>(ga.data()[i]) : 0.0;
      diff2 += (gan - gfd) * (gan - gfd);
      ref2 += gfd * gfd;
      ana2 += gan * gan;
    }
  }
  const double denom = std::max({std::sqrt(ref2), std::sqrt(ana2), 1e-8});
  return std::sqrt(diff2) / denom;
}

}  // namespace ropc
