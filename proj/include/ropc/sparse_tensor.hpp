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

// Hash-indexed sparse tensors on an integer voxel grid.
//
// A coordinate set is immutable, lexicographically sorted and carries its
// stride (voxel units per step). Features live in a separate matrix whose
// rows follow the coordinate order. Convolutions are evaluated through
// precomputed kernel maps: for every kernel offset, the list of
// (input row, output row) pairs that the offset connects.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ropc/diff.hpp"

namespace ropc {

using Coord = std::array<int32_t, 3>;

inline int32_t floor_div(int32_t a, int32_t b) {
  int32_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

// Open-addressing hash map from coordinate triples to row indices.
class CoordIndex {
 public:
  CoordIndex() = default;
  // Throws Error on a duplicate coordinate.
  explicit CoordIndex(std::span<const Coord> coords);

  // Row of c, or -1.
  int32_t find(const Coord& c) const {
    if (keys_.empty()) return -1;
    std::size_t slot = hash(c) & mask_;
    while (true) {
      const int32_t v = vals_[slot];
      if (v < 0) return -1;
      if (keys_[slot] == c) return v;
      slot = (slot + 1) & mask_;
    }
  }

  std::optional<int32_t> lookup(const Coord& c) const {
    const int32_t r = find(c);
    if (r < 0) return std::nullopt;
    return r;
  }

  std::size_t size() const { return count_; }

  static uint64_t hash(const Coord& c) {
    uint64_t h = (static_cast<uint64_t>(static_cast<uint32_t>(c[0])) << 42) ^
                 (static_cast<uint64_t>(static_cast<uint32_t>(c[1])) << 21) ^
                 static_cast<uint64_t>(static_cast<uint32_t>(c[2]));
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    h *= 0xc4ceb9fe1a85ec53ULL;
    h ^= h >> 33;
    return h;
  }

 private:
  std::vector<Coord> keys_;
  std::vector<int32_t> vals_;
  std::size_t mask_ = 0;
  std::size_t count_ = 0;
};

CoordIndex build_index(std::span<const Coord> coords);

class CoordSet;
using CoordSetPtr = std::shared_ptr<const CoordSet>;

class CoordSet {
 public:
  // Sorts lexicographically and indexes. Throws on duplicates or on a
  // coordinate not divisible by the stride.
  static CoordSetPtr create(std::vector<Coord> coords, int32_t stride = 1);

  const std::vector<Coord>& coords() const { return coords_; }
  const Coord& operator[](std::size_t i) const { return coords_[i]; }
  int32_t stride() const { return stride_; }
  const CoordIndex& index() const { return index_; }
  std::size_t size() const { return coords_.size(); }
  int32_t find(const Coord& c) const { return index_.find(c); }

 private:
  CoordSet() = default;
  std::vector<Coord> coords_;
  int32_t stride_ = 1;
  CoordIndex index_;
};

template <typename T>
struct SparseTensor {
  CoordSetPtr coords;
  Var<T> feats;  // coords->size() x C

  Eigen::Index channels() const { return feats->value.cols(); }
  std::size_t size() const { return coords->size(); }
};

// floor(c / stride) * stride for every coordinate, deduplicated and sorted.
// `stride` is the target stride in voxel units (2 for the first level).
std::vector<Coord> downsample_coords(std::span<const Coord> coords, int32_t stride);

// Kernel offsets of a K^3 cube, z fastest: (-h,-h,-h), (-h,-h,-h+1), ...
std::vector<Coord> kernel_offsets(int kernel);

struct Neighbor {
  int32_t row;
  Coord offset;  // c_i - c_j in voxel units
};

// Occupied rows j with |c_j - c_i|_inf <= stride * (window - 1) / 2,
// including i, sorted by row.
std::vector<Neighbor> window_neighbors(const CoordSet& set, std::size_t i, int window);

// Window neighborhoods of every row in compressed form. offset_ids index
// the window^3 table of offsets (c_i - c_j) / stride in z-fastest order.
struct NeighborLists {
  int window = 1;
  std::vector<int32_t> begin;  // size n + 1
  std::vector<int32_t> rows;
  std::vector<int32_t> offset_ids;

  std::size_t pair_count() const { return rows.size(); }
};

NeighborLists build_neighbor_lists(const CoordSet& set, int window);

// For each kernel offset the (input row, output row) pairs it connects.
struct KernelMap {
  int kernel = 1;
  std::vector<std::vector<int32_t>> in_rows;
  std::vector<std::vector<int32_t>> out_rows;

  std::size_t pair_count() const;
};

// Eq.-1 style map: output site c gathers input c + m * in.stride.
// Stride-1 layers pass the same set twice.
KernelMap build_conv_map(const CoordSet& in, const CoordSet& out, int kernel);

// Transposed map for up-sampling: a fine site t gathers the coarse sites
// parent(t) + m * coarse.stride, parent(t) = floor(t / coarse.stride) * coarse.stride.
KernelMap build_up_map(const CoordSet& coarse, const CoordSet& fine, int kernel);

// Coordinate levels 0..depth, level l having stride 2^l. Kernel maps are
// cached per (input set, output set, kernel, kind).
class GeometryPyramid {
 public:
  GeometryPyramid(std::vector<Coord> level0, int depth);

  int depth() const { return static_cast<int>(levels_.size()) - 1; }
  const CoordSetPtr& level(int l) const;
  // Level index of a set owned by this pyramid, or -1.
  int level_of(const CoordSet& set) const;

  std::shared_ptr<const KernelMap> conv_map(int in_level, int out_level, int kernel) const;
  std::shared_ptr<const KernelMap> up_map(int coarse_level, int fine_level, int kernel) const;
  std::shared_ptr<const NeighborLists> neighbor_lists(int level, int window) const;

 private:
  std::vector<CoordSetPtr> levels_;
  mutable std::mutex mutex_;
  mutable std::map<std::tuple<int, int, int, int>, std::shared_ptr<const KernelMap>> cache_;
  mutable std::map<std::pair<int, int>, std::shared_ptr<const NeighborLists>> neighbor_cache_;
};

// Layer description; the weights live in a ParamStore under
// "<name>.weight" (K^3 * c_in x c_out, block m holds W_m) and
// "<name>.bias" (1 x c_out).
struct ConvLayer {
  std::string name;
  int kernel = 3;
  int stride = 1;
  Eigen::Index c_in = 0;
  Eigen::Index c_out = 0;

  std::string weight_name() const { return name + ".weight"; }
  std::string bias_name() const { return name + ".bias"; }
  Eigen::Index offsets() const { return static_cast<Eigen::Index>(kernel) * kernel * kernel; }

  void init(ParamStore<float>& params, Rng& rng, double gain = 1.0) const;
};

// Gather-GEMM-scatter convolution over a kernel map with n_out output rows.
template <typename T>
Var<T> kernel_conv(Tape<T>& tape, const Var<T>& feats, const Var<T>& weight,
                   const Var<T>& bias, std::shared_ptr<const KernelMap> map, Eigen::Index n_out);

// Stride 1: output coordinates equal the input's. Stride 2: output is the
// next pyramid level. The input must be a level of `pyr`.
template <typename T>
SparseTensor<T> sparse_conv(Tape<T>& tape, const ParamStore<T>& params, const ConvLayer& layer,
                            const SparseTensor<T>& x, const GeometryPyramid& pyr);

// Stride-1 convolution without a pyramid (map built on the fly).
template <typename T>
SparseTensor<T> sparse_conv(Tape<T>& tape, const ParamStore<T>& params, const ConvLayer& layer,
                            const SparseTensor<T>& x);

// Transposed convolution onto `target`, which must be the pyramid level one
// step finer than x.
template <typename T>
SparseTensor<T> sparse_conv_up(Tape<T>& tape, const ParamStore<T>& params,
                               const ConvLayer& layer, const SparseTensor<T>& x,
                               const GeometryPyramid& pyr, const CoordSetPtr& target);

}  // namespace ropc
