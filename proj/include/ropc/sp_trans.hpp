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

// Sparse-tensor transformer block: windowed self-attention whose weights are
// cosine similarities between a query and a position-augmented key,
//
//   f'_i = sum_{j in N(i)} cos(theta(f_i), alpha(f_j) + delta(c_i - c_j)) * lambda(f_j),
//
// followed by an identity skip connection. N(i) is the set of occupied
// sites in the window^3 cube around c_i.

#pragma once

#include <string>
#include <vector>

#include "ropc/sparse_tensor.hpp"

namespace ropc {

// Two-layer perceptron in -> hidden -> out with ReLU in between. Parameters
// "<name>.0.weight", "<name>.0.bias", "<name>.1.weight", "<name>.1.bias".
struct Mlp {
  std::string name;
  Eigen::Index in = 0;
  Eigen::Index hidden = 0;
  Eigen::Index out = 0;

  void init(ParamStore<float>& params, Rng& rng, double gain = 1.0) const;

  template <typename T>
  Var<T> forward(Tape<T>& tape, const ParamStore<T>& params, const Var<T>& x) const;
};

enum class AttentionKind { kCosine, kSoftmax };

// Query (theta), key (alpha), value (lambda) projections and the relative
// position encoder (delta, 3 -> C -> C).
struct SPTransBlock {
  std::string name;
  Eigen::Index channels = 0;
  int window = 5;
  AttentionKind kind = AttentionKind::kCosine;  // softmax only for ablations

  Mlp query() const { return {name + ".theta", channels, channels, channels}; }
  Mlp key() const { return {name + ".alpha", channels, channels, channels}; }
  Mlp value() const { return {name + ".lambda", channels, channels, channels}; }
  Mlp position() const { return {name + ".delta", 3, channels, channels}; }

  void init(ParamStore<float>& params, Rng& rng) const;
};

// Norm below which a cosine argument is treated as zero (weight 0).
inline constexpr double kCosineGuard = 1e-12;

// Relative offsets fed to the position encoder, one row per window cell:
// (c_i - c_j) in voxel units for a set of the given stride, z fastest.
template <typename T>
Mat<T> window_offset_table(int window, int32_t stride);

// Attention weight of every (i, j) pair in `nl`, in pair order.
template <typename T>
std::vector<T> attention_weights(const Mat<T>& q, const Mat<T>& k, const Mat<T>& pos,
                                 const NeighborLists& nl, AttentionKind kind);

// Weighted aggregation over precomputed projections. q, k, v are N x C;
// pos holds one encoded offset per window cell.
template <typename T>
Var<T> windowed_attention(Tape<T>& tape, const Var<T>& q, const Var<T>& k, const Var<T>& v,
                          const Var<T>& pos, std::shared_ptr<const NeighborLists> nl,
                          AttentionKind kind);

template <typename T>
SparseTensor<T> local_attention(Tape<T>& tape, const ParamStore<T>& params, const SPTransBlock& block,
                                const SparseTensor<T>& x,
                                std::shared_ptr<const NeighborLists> nl = nullptr);

// x + local_attention(x).
template <typename T>
SparseTensor<T> sp_trans_block(Tape<T>& tape, const ParamStore<T>& params, const SPTransBlock& block,
                               const SparseTensor<T>& x,
                               std::shared_ptr<const NeighborLists> nl = nullptr);

}  // namespace ropc
