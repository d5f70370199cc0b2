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

#include "ropc/sp_trans.hpp"

#include <cmath>

#include "ropc/parallel.hpp"

namespace ropc {

void Mlp::init(ParamStore<float>& params, Rng& rng, double gain) const {
  params.add(name + ".0.weight", fan_in_uniform(in, hidden, in, rng, gain));
  params.add(name + ".0.bias", fan_in_uniform(1, hidden, in, rng, gain));
  params.add(name + ".1.weight", fan_in_uniform(hidden, out, hidden, rng, gain));
  params.add(name + ".1.bias", fan_in_uniform(1, out, hidden, rng, gain));
}

template <typename T>
Var<T> Mlp::forward(Tape<T>& tape, const ParamStore<T>& params, const Var<T>& x) const {
  if (x->value.cols() != in) throw Error("mlp '" + name + "': input width mismatch");
  auto h = relu(tape, linear(tape, x, params.get(name + ".0.weight"), params.get(name + ".0.bias")));
  return linear(tape, h, params.get(name + ".1.weight"), params.get(name + ".1.bias"));
}

void SPTransBlock::init(ParamStore<float>& params, Rng& rng) const {
  if (window < 1 || window % 2 == 0) throw Error("attention window must be odd");
  query().init(params, rng);
  key().init(params, rng);
  value().init(params, rng);
  position().init(params, rng);
}

template <typename T>
Mat<T> window_offset_table(int window, int32_t stride) {
  const int h = (window - 1) / 2;
  Mat<T> table(static_cast<Eigen::Index>(window) * window * window, 3);
  Eigen::Index r = 0;
  for (int x = -h; x <= h; ++x)
    for (int y = -h; y <= h; ++y)
      for (int z = -h; z <= h; ++z, ++r) {
        table(r, 0) = static_cast<T>(x * stride);
        table(r, 1) = static_cast<T>(y * stride);
        table(r, 2) = static_cast<T>(z * stride);
      }
  return table;
}

namespace {

template <typename T>
void check_shapes(const Mat<T>& q, const Mat<T>& k, const Mat<T>& pos, const NeighborLists& nl) {
  if (q.rows() != k.rows() || q.cols() != k.cols() || pos.cols() != q.cols())
    throw Error("attention: projection shapes differ");
  if (static_cast<std::size_t>(q.rows()) + 1 != nl.begin.size())
    throw Error("attention: neighbor lists do not match the point count");
  const Eigen::Index cells = static_cast<Eigen::Index>(nl.window) * nl.window * nl.window;
  if (pos.rows() != cells) throw Error("attention: position table does not match the window");
}

// Weights of row i's neighborhood into w (pair order).
template <typename T>
void row_weights(const Mat<T>& q, const Mat<T>& k, const Mat<T>& pos, const NeighborLists& nl,
                 AttentionKind kind, std::size_t i, T* w) {
  const auto qi = q.row(static_cast<Eigen::Index>(i));
  const int32_t b = nl.begin[i];
  const int32_t e = nl.begin[i + 1];
  if (kind == AttentionKind::kCosine) {
    const T nq = qi.norm();
    for (int32_t p = b; p < e; ++p) {
      const auto kp = k.row(nl.rows[p]) + pos.row(nl.offset_ids[p]);
      const T nk = kp.norm();
      w[p - b] = (nq < T(kCosineGuard) || nk < T(kCosineGuard)) ? T(0) : qi.dot(kp) / (nq * nk);
    }
  } else {
    const T inv = T(1) / std::sqrt(static_cast<T>(q.cols()));
    T mx = -std::numeric_limits<T>::infinity();
    for (int32_t p = b; p < e; ++p) {
      w[p - b] = qi.dot(k.row(nl.rows[p]) + pos.row(nl.offset_ids[p])) * inv;
      mx = std::max(mx, w[p - b]);
    }
    T total = 0;
    for (int32_t p = b; p < e; ++p) total += (w[p - b] = std::exp(w[p - b] - mx));
    for (int32_t p = b; p < e; ++p) w[p - b] /= total;
  }
}

}  // namespace

template <typename T>
std::vector<T> attention_weights(const Mat<T>& q, const Mat<T>& k, const Mat<T>& pos,
                                 const NeighborLists& nl, AttentionKind kind) {
  check_shapes(q, k, pos, nl);
  std::vector<T> w(nl.pair_count());
  for (std::size_t i = 0; i + 1 < nl.begin.size(); ++i)
    row_weights(q, k, pos, nl, kind, i, w.data() + nl.begin[i]);
  return w;
}

template <typename T>
Var<T> windowed_attention(Tape<T>& tape, const Var<T>& q, const Var<T>& k, const Var<T>& v,
                          const Var<T>& pos, std::shared_ptr<const NeighborLists> nl_ptr,
                          AttentionKind kind) {
  const NeighborLists& nl = *nl_ptr;
  check_shapes(q->value, k->value, pos->value, nl);
  if (v->value.rows() != q->value.rows()) throw Error("attention: value rows differ");
  const std::size_t n = nl.begin.size() - 1;
  auto weights = std::make_shared<std::vector<T>>(nl.pair_count());
  Mat<T> out = Mat<T>::Zero(static_cast<Eigen::Index>(n), v->value.cols());
  parallel_for(0, n, [&](std::size_t i) {
    T* w = weights->data() + nl.begin[i];
    row_weights(q->value, k->value, pos->value, nl, kind, i, w);
    for (int32_t p = nl.begin[i]; p < nl.begin[i + 1]; ++p)
      out.row(static_cast<Eigen::Index>(i)) += w[p - nl.begin[i]] * v->value.row(nl.rows[p]);
  });

  return tape.apply(std::move(out), {q, k, v, pos},
                    [q, k, v, pos, nl_ptr, weights, kind](const Mat<T>& g) {
    const NeighborLists& nl = *nl_ptr;
    const Eigen::Index c = q->value.cols();
    const std::size_t n = nl.begin.size() - 1;
    Mat<T> dq = Mat<T>::Zero(q->value.rows(), c);
    Mat<T> dk = Mat<T>::Zero(k->value.rows(), c);
    Mat<T> dv = Mat<T>::Zero(v->value.rows(), v->value.cols());
    Mat<T> dpos = Mat<T>::Zero(pos->value.rows(), c);
    Eigen::Matrix<T, 1, Eigen::Dynamic> kp(c), dkp(c);
    std::vector<T> dw;
    // Serial in row order so the scatter into dk/dv/dpos is deterministic.
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::Index ii = static_cast<Eigen::Index>(i);
      const int32_t b = nl.begin[i];
      const int32_t e = nl.begin[i + 1];
      const T* w = weights->data() + b;
      const auto gi = g.row(ii);
      const auto qi = q->value.row(ii);
      dw.assign(static_cast<std::size_t>(e - b), T(0));
      for (int32_t p = b; p < e; ++p) {
        dv.row(nl.rows[p]) += w[p - b] * gi;
        dw[static_cast<std::size_t>(p - b)] = gi.dot(v->value.row(nl.rows[p]));
      }
      if (kind == AttentionKind::kCosine) {
        const T nq = qi.norm();
        for (int32_t p = b; p < e; ++p) {
          kp = k->value.row(nl.rows[p]) + pos->value.row(nl.offset_ids[p]);
          const T nk = kp.norm();
          if (nq < T(kCosineGuard) || nk < T(kCosineGuard)) continue;
          const T wp = w[p - b];
          const T d = dw[static_cast<std::size_t>(p - b)];
          dq.row(ii) += d * (kp / (nq * nk) - (wp / (nq * nq)) * qi);
          dkp = d * (qi / (nq * nk) - (wp / (nk * nk)) * kp);
          dk.row(nl.rows[p]) += dkp;
          dpos.row(nl.offset_ids[p]) += dkp;
        }
      } else {
        const T inv = T(1) / std::sqrt(static_cast<T>(c));
        T mean_dw = 0;
        for (int32_t p = b; p < e; ++p) mean_dw += w[p - b] * dw[static_cast<std::size_t>(p - b)];
        for (int32_t p = b; p < e; ++p) {
          const T ds = w[p - b] * (dw[static_cast<std::size_t>(p - b)] - mean_dw) * inv;
          kp = k->value.row(nl.rows[p]) + pos->value.row(nl.offset_ids[p]);
          dq.row(ii) += ds * kp;
          dkp = ds * qi;
          dk.row(nl.rows[p]) += dkp;
          dpos.row(nl.offset_ids[p]) += dkp;
        }
      }
    }
    accumulate(q, dq);
    accumulate(k, dk);
    accumulate(v, dv);
    accumulate(pos, dpos);
  });
}

template <typename T>
SparseTensor<T> local_attention(Tape<T>& tape, const ParamStore<T>& params, const SPTransBlock& block,
                                const SparseTensor<T>& x, std::shared_ptr<const NeighborLists> nl) {
  if (x.channels() != block.channels)
    throw Error("sp_trans '" + block.name + "': expected " + std::to_string(block.channels) +
                " channels, got " + std::to_string(x.channels()));
  if (!nl) nl = std::make_shared<const NeighborLists>(build_neighbor_lists(*x.coords, block.window));
  if (nl->window != block.window) throw Error("sp_trans: neighbor lists built for another window");
  auto q = block.query().forward(tape, params, x.feats);
  auto k = block.key().forward(tape, params, x.feats);
  auto v = block.value().forward(tape, params, x.feats);
  auto offsets = tape.constant(window_offset_table<T>(block.window, x.coords->stride()));
  auto pos = block.position().forward(tape, params, offsets);
  return {x.coords, windowed_attention(tape, q, k, v, pos, std::move(nl), block.kind)};
}

template <typename T>
SparseTensor<T> sp_trans_block(Tape<T>& tape, const ParamStore<T>& params, const SPTransBlock& block,
                               const SparseTensor<T>& x, std::shared_ptr<const NeighborLists> nl) {
  auto att = local_attention(tape, params, block, x, std::move(nl));
  return {x.coords, add(tape, x.feats, att.feats)};
}

#define ROPC_INSTANTIATE(T)                                                                      \
  template Var<T> Mlp::forward<T>(Tape<T>&, const ParamStore<T>&, const Var<T>&) const;          \
  template Mat<T> window_offset_table<T>(int, int32_t);                                          \
  template std::vector<T> attention_weights<T>(const Mat<T>&, const Mat<T>&, const Mat<T>&,      \
                                               const NeighborLists&, AttentionKind);             \
  template Var<T> windowed_attention<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&,   \
                                        const Var<T>&, std::shared_ptr<const NeighborLists>,     \
                                        AttentionKind);                                          \
  template SparseTensor<T> local_attention<T>(Tape<T>&, const ParamStore<T>&,                    \
                                              const SPTransBlock&, const SparseTensor<T>&,       \
                                              std::shared_ptr<const NeighborLists>);             \
  template SparseTensor<T> sp_trans_block<T>(Tape<T>&, const ParamStore<T>&, const SPTransBlock&, \
                                             const SparseTensor<T>&,                             \
                                             std::shared_ptr<const NeighborLists>);
ROPC_INSTANTIATE(float)
ROPC_INSTANTIATE(double)
#undef ROPC_INSTANTIATE

}  // namespace ropc
