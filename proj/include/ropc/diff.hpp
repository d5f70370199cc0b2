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

// Minimal reverse-mode differentiation: a tape of hand-written backward
// rules over dense row-major matrices, a named parameter store with Adam
// state, and the checkpoint format.
//
// Everything is templated on the scalar type. Training runs in float; the
// finite-difference oracle re-evaluates the same forward code in double.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ropc/common.hpp"

namespace ropc {

template <typename T>
struct Node {
  Mat<T> value;
  Mat<T> grad;  // sized on first accumulation
  bool requires_grad = false;

  Mat<T>& grad_buffer() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Mat<T>::Zero(value.rows(), value.cols());
    return grad;
  }
  bool has_grad() const { return grad.size() != 0; }
};

template <typename T>
using Var = std::shared_ptr<Node<T>>;

template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(const Mat<T>& grad_out)>;

  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return recording_; }
  std::size_t size() const { return ops_.size(); }

  // Leaf that never receives a gradient.
  Var<T> constant(Mat<T> value) const {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return n;
  }

  // Leaf that accumulates a gradient during backward().
  Var<T> variable(Mat<T> value) const {
    auto n = constant(std::move(value));
    n->requires_grad = true;
    n->grad_buffer();
    return n;
  }

  // Wraps a computed value. The backward rule is recorded only when
  // recording and at least one input needs a gradient.
  Var<T> apply(Mat<T> value, std::initializer_list<Var<T>> inputs,
               BackwardFn backward) {
    return apply(std::move(value), std::vector<Var<T>>(inputs), std::move(backward));
  }

  Var<T> apply(Mat<T> value, const std::vector<Var<T>>& inputs, BackwardFn backward) {
    auto out = constant(std::move(value));
    if (!recording_) return out;
    bool needs = false;
    for (const auto& in : inputs) needs = needs || (in && in->requires_grad);
    if (!needs) return out;
    out->requires_grad = true;
    std::weak_ptr<Node<T>> weak = out;
    ops_.emplace_back([weak, fn = std::move(backward)] {
      auto node = weak.lock();
      if (node && node->has_grad()) fn(node->grad);
    });
    // The tape owns intermediate nodes so gradients reach them even when the
    // caller only keeps the final loss.
    keep_.push_back(out);
    return out;
  }

  // Replays the recorded rules in reverse order with d(loss)/d(loss) = seed.
  void backward(const Var<T>& loss, T seed = T(1)) {
    if (replayed_) throw Error("tape already replayed; call reset() first");
    if (loss->value.size() != 1) throw Error("backward requires a scalar loss");
    replayed_ = true;
    loss->grad_buffer()(0, 0) += seed;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
  }

  void reset() {
    ops_.clear();
    keep_.clear();
    replayed_ = false;
  }

 private:
  std::vector<std::function<void()>> ops_;
  std::vector<Var<T>> keep_;
  bool recording_;
  bool replayed_ = false;
};

// Accumulates g into v's gradient if v participates in differentiation.
template <typename T, typename Expr>
inline void accumulate(const Var<T>& v, const Expr& g) {
  if (v && v->requires_grad) v->grad_buffer() += g;
}

// ---------------------------------------------------------------------------
// Elementary operations.

template <typename T>
Var<T> matmul(Tape<T>& tape, const Var<T>& x, const Var<T>& w) {
  if (x->value.cols() != w->value.rows())
    throw Error("matmul: inner dimensions differ");
  Mat<T> out = x->value * w->value;
  return tape.apply(std::move(out), {x, w}, [x, w](const Mat<T>& g) {
    if (x->requires_grad) x->grad_buffer().noalias() += g * w->value.transpose();
    if (w->requires_grad) w->grad_buffer().noalias() += x->value.transpose() * g;
  });
}

// x + b with b broadcast over rows (b is 1 x C).
template <typename T>
Var<T> add_bias(Tape<T>& tape, const Var<T>& x, const Var<T>& b) {
  if (b->value.rows() != 1 || b->value.cols() != x->value.cols())
    throw Error("add_bias: bias shape mismatch");
  Mat<T> out = x->value.rowwise() + b->value.row(0);
  return tape.apply(std::move(out), {x, b}, [x, b](const Mat<T>& g) {
    accumulate(x, g);
    accumulate(b, g.colwise().sum());
  });
}

template <typename T>
Var<T> linear(Tape<T>& tape, const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  return add_bias(tape, matmul(tape, x, w), b);
}

template <typename T>
Var<T> relu(Tape<T>& tape, const Var<T>& x) {
  Mat<T> out = x->value.cwiseMax(T(0));
  return tape.apply(std::move(out), {x}, [x](const Mat<T>& g) {
    accumulate(x, (x->value.array() > T(0)).select(g, T(0)).matrix());
  });
}

// log(1 + exp(x)), computed without overflow.
template <typename T>
inline T softplus_scalar(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
inline T sigmoid_scalar(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Var<T> softplus(Tape<T>& tape, const Var<T>& x) {
  Mat<T> out = x->value.unaryExpr([](T v) { return softplus_scalar(v); });
  return tape.apply(std::move(out), {x}, [x](const Mat<T>& g) {
    accumulate(x, g.cwiseProduct(
                      x->value.unaryExpr([](T v) { return sigmoid_scalar(v); })));
  });
}

template <typename T>
Var<T> add(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    throw Error("add: shape mismatch");
  Mat<T> out = a->value + b->value;
  return tape.apply(std::move(out), {a, b}, [a, b](const Mat<T>& g) {
    accumulate(a, g);
    accumulate(b, g);
  });
}

template <typename T>
Var<T> add_scalar(Tape<T>& tape, const Var<T>& x, T c) {
  Mat<T> out = x->value.array() + c;
  return tape.apply(std::move(out), {x}, [x](const Mat<T>& g) { accumulate(x, g); });
}

template <typename T>
Var<T> scale(Tape<T>& tape, const Var<T>& x, T s) {
  Mat<T> out = x->value * s;
  return tape.apply(std::move(out), {x}, [x, s](const Mat<T>& g) { accumulate(x, g * s); });
}

// Sum of all entries as a 1x1 result.
template <typename T>
Var<T> sum(Tape<T>& tape, const Var<T>& x) {
  Mat<T> out(1, 1);
  out(0, 0) = x->value.sum();
  return tape.apply(std::move(out), {x}, [x](const Mat<T>& g) {
    accumulate(x, Mat<T>::Constant(x->value.rows(), x->value.cols(), g(0, 0)));
  });
}

// Mean squared difference over all entries (1x1).
template <typename T>
Var<T> mse(Tape<T>& tape, const Var<T>& a, const Var<T>& b) {
  if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols())
    throw Error("mse: shape mismatch");
  const T n = static_cast<T>(a->value.size());
  Mat<T> out(1, 1);
  out(0, 0) = (a->value - b->value).squaredNorm() / n;
  return tape.apply(std::move(out), {a, b}, [a, b, n](const Mat<T>& g) {
    const Mat<T> d = (a->value - b->value) * (T(2) * g(0, 0) / n);
    accumulate(a, d);
    accumulate(b, -d);
  });
}

// Columns [start, start + count).
template <typename T>
Var<T> slice_cols(Tape<T>& tape, const Var<T>& x, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || start + count > x->value.cols()) throw Error("slice_cols: out of range");
  Mat<T> out = x->value.middleCols(start, count);
  return tape.apply(std::move(out), {x}, [x, start, count](const Mat<T>& g) {
    if (x->requires_grad) x->grad_buffer().middleCols(start, count) += g;
  });
}

// ---------------------------------------------------------------------------
// Parameters and optimization.

template <typename T>
class ParamStore {
 public:
  using Scalar = T;

  struct Entry {
    std::string name;
    Var<T> var;
    Mat<T> m;  // first moment
    Mat<T> v;  // second moment
    int64_t step = 0;
  };

  // Registers a parameter; names are unique.
  Var<T> add(const std::string& name, Mat<T> init) {
    if (index_.count(name)) throw Error("duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.var = std::make_shared<Node<T>>();
    e.var->value = std::move(init);
    e.var->requires_grad = true;
    e.var->grad_buffer();
    e.m = Mat<T>::Zero(e.var->value.rows(), e.var->value.cols());
    e.v = Mat<T>::Zero(e.var->value.rows(), e.var->value.cols());
    index_.emplace(name, entries_.size());
    entries_.push_back(std::move(e));
    return entries_.back().var;
  }

  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  const Var<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown parameter: " + name);
    return entries_[it->second].var;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.var->value.size());
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.var->grad_buffer().setZero();
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& e : entries_) s += static_cast<double>(e.var->grad.squaredNorm());
    return std::sqrt(s);
  }

  void scale_grad(T s) {
    for (auto& e : entries_) e.var->grad_buffer() *= s;
  }

  // Copy of values (moments and gradients reset) in another scalar type.
  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& e : entries_) out.add(e.name, e.var->value.template cast<U>());
    return out;
  }

  // Deep copy including optimizer state.
  ParamStore clone() const {
    ParamStore out;
    for (const auto& e : entries_) {
      auto v = out.add(e.name, e.var->value);
      v->grad = e.var->grad;
      auto& ne = out.entries_.back();
      ne.m = e.m;
      ne.v = e.v;
      ne.step = e.step;
    }
    return out;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update from the accumulated gradients; gradients are cleared
// afterwards. Throws naming the first parameter with a non-finite gradient
// before touching any value.
void adam_step(ParamStore<float>& params, double lr, const AdamOptions& opt = {});

// Rescales gradients so their global L2 norm is at most max_norm. Returns
// the norm before clipping.
double clip_grad_norm(ParamStore<float>& params, double max_norm);

struct LrSchedule {
  double base = 1e-4;
  double decay = 0.75;
  int period = 15;  // epochs between decays
  double floor = 1e-6;
};

double lr_schedule(int epoch, const LrSchedule& schedule = {});

// Uniform(-bound, bound) with bound = gain / sqrt(fan_in).
MatF fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in,
                    Rng& rng, double gain = 1.0);

// Checkpoint file: "ROPW", version u8, config text (u32 length + bytes),
// tensor count u32, per-tensor manifest (u16 name length, name, u8 rank,
// u32 dims), then each tensor's row-major little-endian f32 data in
// manifest order.
struct Checkpoint {
  ParamStore<float> params;
  std::string config;
};

void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const std::string& config);
Checkpoint load_checkpoint(const std::string& path);

// In-memory variants used by the file functions and tests.
std::string serialize_checkpoint(const ParamStore<float>& params, const std::string& config);
Checkpoint parse_checkpoint(const std::string& bytes);

}  // namespace ropc
