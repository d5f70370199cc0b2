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

#include "ropc/entropy.hpp"

#include <array>
#include <cmath>

namespace ropc {

template <typename T>
Mat<T> uniform_noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Mat<T> n(rows, cols);
  for (Eigen::Index i = 0; i < n.size(); ++i) n.data()[i] = static_cast<T>(rng.uniform() - 0.5);
  return n;
}

template <typename T>
Var<T> add_noise(Tape<T>& tape, const Var<T>& x, const Mat<T>& noise) {
  if (noise.rows() != x->value.rows() || noise.cols() != x->value.cols())
    throw Error("add_noise: shape mismatch");
  Mat<T> out = x->value + noise;
  return tape.apply(std::move(out), {x}, [x](const Mat<T>& g) { accumulate(x, g); });
}

template <typename T>
Var<T> quantize(Tape<T>& tape, const Var<T>& x, QuantMode mode, Rng* rng) {
  if (mode == QuantMode::kTrain) {
    if (!rng) throw Error("quantize: training mode needs a generator");
    return add_noise(tape, x, uniform_noise<T>(x->value.rows(), x->value.cols(), *rng));
  }
  return tape.constant(x->value.unaryExpr([](T v) { return static_cast<T>(round_half_away(v)); }));
}

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

namespace {

constexpr double kInvSqrt2Pi = 0.39894228040143267794;

// Unfloored bin mass, computed on the lower tail for precision.
template <typename T>
T raw_gaussian_mass(T v, T mu, T sigma) {
  const T a = std::abs(v - mu);
  const T upper = (T(0.5) - a) / sigma;
  const T lower = (-T(0.5) - a) / sigma;
  const T s = T(1) / std::sqrt(T(2));
  return T(0.5) * (std::erfc(-upper * s) - std::erfc(-lower * s));
}

template <typename T>
T normal_pdf(T x) {
  return static_cast<T>(kInvSqrt2Pi) * std::exp(-T(0.5) * x * x);
}

}  // namespace

double gaussian_mass(double v, double mu, double sigma) {
  return std::max(raw_gaussian_mass(v, mu, sigma), kMassFloor);
}

template <typename T>
Var<T> gaussian_mass(Tape<T>& tape, const Var<T>& y_hat, const Var<T>& mu, const Var<T>& sigma) {
  const auto& y = y_hat->value;
  if (mu->value.rows() != y.rows() || mu->value.cols() != y.cols() ||
      sigma->value.rows() != y.rows() || sigma->value.cols() != y.cols())
    throw Error("gaussian_mass: shape mismatch");
  Mat<T> p(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const T s = sigma->value.data()[i];
    if (!(s > T(0))) throw Error("gaussian_mass: scale must be positive");
    p.data()[i] = std::max(raw_gaussian_mass(y.data()[i], mu->value.data()[i], s), static_cast<T>(kMassFloor));
  }
  return tape.apply(std::move(p), {y_hat, mu, sigma}, [y_hat, mu, sigma](const Mat<T>& g) {
    const auto& y = y_hat->value;
    Mat<T> dv(y.rows(), y.cols()), ds(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const T v = y.data()[i], m = mu->value.data()[i], s = sigma->value.data()[i];
      if (raw_gaussian_mass(v, m, s) <= static_cast<T>(kMassFloor)) {
        dv.data()[i] = ds.data()[i] = T(0);
        continue;
      }
      const T up = (v - m + T(0.5)) / s;
      const T lo = (v - m - T(0.5)) / s;
      const T pu = normal_pdf(up), pl = normal_pdf(lo);
      dv.data()[i] = g.data()[i] * (pu - pl) / s;
      ds.data()[i] = g.data()[i] * (lo * pl - up * pu) / s;
    }
    accumulate(y_hat, dv);
    accumulate(mu, -dv);
    accumulate(sigma, ds);
  });
}

// ---------------------------------------------------------------------------
// Factorized model.

namespace {

// One channel's network with transformed parameters and cached activations.
template <typename T>
struct ChannelNet {
  static constexpr int L = FactorizedModel::kLayers;
  // Matrices stored row-major out x in, flattened.
  std::array<std::array<T, 9>, L> mat{};     // softplus(raw)
  std::array<std::array<T, 9>, L> mat_raw{};
  std::array<std::array<T, 3>, L> bias{};
  std::array<std::array<T, 3>, L - 1> gate{};  // tanh(raw)

  static int width(int k) { return FactorizedModel::kWidths[k]; }

  void load(const ParamStore<T>& params, const std::string& name, Eigen::Index c) {
    for (int k = 0; k < L; ++k) {
      const auto& m = params.get(name + ".matrix" + std::to_string(k))->value;
      const auto& b = params.get(name + ".bias" + std::to_string(k))->value;
      for (int e = 0; e < width(k + 1) * width(k); ++e) {
        mat_raw[k][e] = m(c, e);
        mat[k][e] = softplus_scalar(m(c, e));
      }
      for (int o = 0; o < width(k + 1); ++o) bias[k][o] = b(c, o);
      if (k < L - 1) {
        const auto& f = params.get(name + ".factor" + std::to_string(k))->value;
        for (int o = 0; o < width(k + 1); ++o) gate[k][o] = std::tanh(f(c, o));
      }
    }
  }

  struct Trace {
    std::array<std::array<T, 3>, L> u{};  // layer inputs
    std::array<std::array<T, 3>, L> h{};  // affine outputs
  };

  T forward(T x, Trace& tr) const {
    tr.u[0][0] = x;
    for (int k = 0; k < L; ++k) {
      for (int o = 0; o < width(k + 1); ++o) {
        T acc = bias[k][o];
        for (int i = 0; i < width(k); ++i) acc += mat[k][o * width(k) + i] * tr.u[k][i];
        tr.h[k][o] = acc;
      }
      if (k < L - 1)
        for (int o = 0; o < width(k + 1); ++o)
          tr.u[k + 1][o] = tr.h[k][o] + gate[k][o] * std::tanh(tr.h[k][o]);
    }
    return tr.h[L - 1][0];
  }

  // Gradients w.r.t. raw parameters accumulate into the d* arrays; returns
  // d logit / dx scaled by dlogit.
  struct Grads {
    std::array<std::array<T, 9>, L> mat{};
    std::array<std::array<T, 3>, L> bias{};
    std::array<std::array<T, 3>, L - 1> factor{};
  };

  T backward(const Trace& tr, T dlogit, Grads& gr) const {
    std::array<T, 3> dh{dlogit, 0, 0};
    std::array<T, 3> du{};
    for (int k = L - 1; k >= 0; --k) {
      du = {};
      for (int o = 0; o < width(k + 1); ++o) {
        gr.bias[k][o] += dh[o];
        for (int i = 0; i < width(k); ++i) {
          const int e = o * width(k) + i;
          gr.mat[k][e] += dh[o] * tr.u[k][i] * sigmoid_scalar(mat_raw[k][e]);
          du[i] += mat[k][e] * dh[o];
        }
      }
      if (k == 0) break;
      for (int i = 0; i < width(k); ++i) {
        const T th = std::tanh(tr.h[k - 1][i]);
        gr.factor[k - 1][i] += du[i] * th * (T(1) - gate[k - 1][i] * gate[k - 1][i]);
        dh[i] = du[i] * (T(1) + gate[k - 1][i] * (T(1) - th * th));
      }
    }
    return du[0];
  }
};

// sigmoid'(x) = sigmoid(x) * sigmoid(-x)
template <typename T>
T sigmoid_grad(T x) {
  return sigmoid_scalar(x) * sigmoid_scalar(-x);
}

template <typename T>
T mass_from_logits(T lower, T upper) {
  // Evaluate on the side where both sigmoids are small.
  const T s = (lower + upper > T(0)) ? T(-1) : T(1);
  const T diff = sigmoid_scalar(s * upper) - sigmoid_scalar(s * lower);
  const T raw = s > T(0) ? diff : -diff;
  if (raw < T(-1e-7)) throw Error("factorized CDF is not monotone");
  return raw;
}

}  // namespace

void FactorizedModel::init(ParamStore<float>& params, Rng& rng) const {
  if (channels <= 0) throw Error("factorized model needs a positive channel count");
  const double scale = std::pow(init_scale, 1.0 / kLayers);
  for (int k = 0; k < kLayers; ++k) {
    const int in = kWidths[k], out = kWidths[k + 1];
    const double target = 1.0 / scale / out;
    const float raw = static_cast<float>(std::log(std::expm1(target)));
    params.add(name + ".matrix" + std::to_string(k), MatF::Constant(channels, in * out, raw));
    MatF b(channels, out);
    for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = static_cast<float>(rng.uniform(-0.5, 0.5));
    params.add(name + ".bias" + std::to_string(k), std::move(b));
    if (k < kLayers - 1) params.add(name + ".factor" + std::to_string(k), MatF::Zero(channels, out));
  }
}

template <typename T>
T FactorizedModel::logit(const ParamStore<T>& params, Eigen::Index channel, T x) const {
  ChannelNet<T> net;
  net.load(params, name, channel);
  typename ChannelNet<T>::Trace tr;
  return net.forward(x, tr);
}

template <typename T>
T FactorizedModel::cdf(const ParamStore<T>& params, Eigen::Index channel, T x) const {
  return sigmoid_scalar(logit(params, channel, x));
}

template <typename T>
T FactorizedModel::mass(const ParamStore<T>& params, Eigen::Index channel, T v) const {
  ChannelNet<T> net;
  net.load(params, name, channel);
  typename ChannelNet<T>::Trace a, b;
  const T raw = mass_from_logits(net.forward(v - T(0.5), a), net.forward(v + T(0.5), b));
  return std::max(raw, static_cast<T>(kMassFloor));
}

template <typename T>
Var<T> factorized_mass(Tape<T>& tape, const ParamStore<T>& params, const FactorizedModel& model,
                       const Var<T>& z_hat) {
  const auto& z = z_hat->value;
  if (z.cols() != model.channels) throw Error("factorized_mass: channel count mismatch");
  std::vector<ChannelNet<T>> nets(static_cast<std::size_t>(model.channels));
  for (Eigen::Index c = 0; c < model.channels; ++c) nets[static_cast<std::size_t>(c)].load(params, model.name, c);
  Mat<T> p(z.rows(), z.cols());
  for (Eigen::Index r = 0; r < z.rows(); ++r)
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      typename ChannelNet<T>::Trace lo, up;
      const auto& net = nets[static_cast<std::size_t>(c)];
      const T raw = mass_from_logits(net.forward(z(r, c) - T(0.5), lo), net.forward(z(r, c) + T(0.5), up));
      p(r, c) = std::max(raw, static_cast<T>(kMassFloor));
    }

  std::vector<Var<T>> ps;
  for (int k = 0; k < FactorizedModel::kLayers; ++k) {
    ps.push_back(params.get(model.name + ".matrix" + std::to_string(k)));
    ps.push_back(params.get(model.name + ".bias" + std::to_string(k)));
    if (k < FactorizedModel::kLayers - 1) ps.push_back(params.get(model.name + ".factor" + std::to_string(k)));
  }
  std::vector<Var<T>> inputs = ps;
  inputs.push_back(z_hat);
  return tape.apply(std::move(p), inputs,
                           [z_hat, ps, nets, name = model.name](const Mat<T>& g) {
    const auto& z = z_hat->value;
    const Eigen::Index channels = z.cols();
    Mat<T> dz = Mat<T>::Zero(z.rows(), z.cols());
    std::vector<typename ChannelNet<T>::Grads> grads(static_cast<std::size_t>(channels));
    for (Eigen::Index r = 0; r < z.rows(); ++r)
      for (Eigen::Index c = 0; c < channels; ++c) {
        const auto& net = nets[static_cast<std::size_t>(c)];
        typename ChannelNet<T>::Trace lo, up;
        const T l = net.forward(z(r, c) - T(0.5), lo);
        const T u = net.forward(z(r, c) + T(0.5), up);
        const T raw = mass_from_logits(l, u);
        if (raw <= static_cast<T>(kMassFloor)) continue;
        const T gp = g(r, c);
        auto& gr = grads[static_cast<std::size_t>(c)];
        // p = sigmoid(u) - sigmoid(l)
        dz(r, c) += net.backward(up, gp * sigmoid_grad(u), gr);
        dz(r, c) += net.backward(lo, -gp * sigmoid_grad(l), gr);
      }
    accumulate(z_hat, dz);
    std::size_t idx = 0;
    for (int k = 0; k < FactorizedModel::kLayers; ++k) {
      const int in = FactorizedModel::kWidths[k], out = FactorizedModel::kWidths[k + 1];
      Mat<T> dm(channels, in * out), db(channels, out);
      for (Eigen::Index c = 0; c < channels; ++c) {
        for (int e = 0; e < in * out; ++e) dm(c, e) = grads[static_cast<std::size_t>(c)].mat[k][e];
        for (int o = 0; o < out; ++o) db(c, o) = grads[static_cast<std::size_t>(c)].bias[k][o];
      }
      accumulate(ps[idx++], dm);
      accumulate(ps[idx++], db);
      if (k < FactorizedModel::kLayers - 1) {
        Mat<T> df(channels, out);
        for (Eigen::Index c = 0; c < channels; ++c)
          for (int o = 0; o < out; ++o) df(c, o) = grads[static_cast<std::size_t>(c)].factor[k][o];
        accumulate(ps[idx++], df);
      }
    }
  });
}

template <typename T>
Var<T> estimate_rate(Tape<T>& tape, const Var<T>& masses) {
  Mat<T> out(1, 1);
  double bits = 0.0;
  for (Eigen::Index i = 0; i < masses->value.size(); ++i) {
    const T p = masses->value.data()[i];
    if (!(p > T(0)) || p > T(1) + T(1e-6)) throw Error("estimate_rate: mass outside (0, 1]");
    bits -= std::log2(static_cast<double>(p));
  }
  out(0, 0) = static_cast<T>(bits);
  return tape.apply(std::move(out), {masses}, [masses](const Mat<T>& g) {
    const T k = -g(0, 0) / static_cast<T>(std::log(2.0));
    accumulate(masses, masses->value.cwiseInverse() * k);
  });
}

double estimate_rate(std::span<const double> masses) {
  double bits = 0.0;
  for (double p : masses) {
    if (!(p > 0.0) || p > 1.0) throw Error("estimate_rate: mass outside (0, 1]");
    bits -= std::log2(p);
  }
  return bits;
}

#define ROPC_INSTANTIATE(T)                                                                      \
  template Mat<T> uniform_noise<T>(Eigen::Index, Eigen::Index, Rng&);                            \
  template Var<T> quantize<T>(Tape<T>&, const Var<T>&, QuantMode, Rng*);                         \
  template Var<T> add_noise<T>(Tape<T>&, const Var<T>&, const Mat<T>&);                          \
  template Var<T> gaussian_mass<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&);       \
  template T FactorizedModel::logit<T>(const ParamStore<T>&, Eigen::Index, T) const;             \
  template T FactorizedModel::cdf<T>(const ParamStore<T>&, Eigen::Index, T) const;               \
  template T FactorizedModel::mass<T>(const ParamStore<T>&, Eigen::Index, T) const;              \
  template Var<T> factorized_mass<T>(Tape<T>&, const ParamStore<T>&, const FactorizedModel&,     \
                                     const Var<T>&);                                             \
  template Var<T> estimate_rate<T>(Tape<T>&, const Var<T>&);
ROPC_INSTANTIATE(float)
ROPC_INSTANTIATE(double)
#undef ROPC_INSTANTIATE

}  // namespace ropc
