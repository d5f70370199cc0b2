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

#include "ropc/sparse_tensor.hpp"

#include <algorithm>
#include <bit>

namespace ropc {

CoordIndex::CoordIndex(std::span<const Coord> coords) {
  count_ = coords.size();
  if (coords.empty()) return;
  const std::size_t cap = std::bit_ceil(std::max<std::size_t>(16, coords.size() * 2));
  keys_.assign(cap, Coord{0, 0, 0});
  vals_.assign(cap, -1);
  mask_ = cap - 1;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const Coord& c = coords[i];
    std::size_t slot = hash(c) & mask_;
    while (vals_[slot] >= 0) {
      if (keys_[slot] == c)
        throw Error("duplicate coordinate (" + std::to_string(c[0]) + "," +
                    std::to_string(c[1]) + "," + std::to_string(c[2]) + ")");
      slot = (slot + 1) & mask_;
    }
    keys_[slot] = c;
    vals_[slot] = static_cast<int32_t>(i);
  }
}

CoordIndex build_index(std::span<const Coord> coords) { return CoordIndex(coords); }

CoordSetPtr CoordSet::create(std::vector<Coord> coords, int32_t stride) {
  if (stride < 1) throw Error("stride must be positive");
  for (const auto& c : coords)
    for (int d = 0; d < 3; ++d)
      if (c[d] % stride != 0) throw Error("coordinate not divisible by stride");
  std::sort(coords.begin(), coords.end());
  auto set = std::shared_ptr<CoordSet>(new CoordSet());
  set->index_ = CoordIndex(coords);
  set->coords_ = std::move(coords);
  set->stride_ = stride;
  return set;
}

std::vector<Coord> downsample_coords(std::span<const Coord> coords, int32_t stride) {
  if (stride < 1) throw Error("downsample stride must be positive");
  std::vector<Coord> out;
  out.reserve(coords.size());
  for (const auto& c : coords)
    out.push_back({floor_div(c[0], stride) * stride, floor_div(c[1], stride) * stride,
                   floor_div(c[2], stride) * stride});
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<Coord> kernel_offsets(int kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw Error("kernel size must be odd and positive");
  const int h = (kernel - 1) / 2;
  std::vector<Coord> offs;
  offs.reserve(static_cast<std::size_t>(kernel) * kernel * kernel);
  for (int x = -h; x <= h; ++x)
    for (int y = -h; y <= h; ++y)
      for (int z = -h; z <= h; ++z) offs.push_back({x, y, z});
  return offs;
}

std::vector<Neighbor> window_neighbors(const CoordSet& set, std::size_t i, int window) {
  if (window < 1 || window % 2 == 0) throw Error("window size must be odd and positive");
  if (i >= set.size()) throw Error("window_neighbors: row index out of range");
  const int h = (window - 1) / 2;
  const int32_t s = set.stride();
  const Coord& c = set[i];
  std::vector<Neighbor> out;
  for (int x = -h; x <= h; ++x)
    for (int y = -h; y <= h; ++y)
      for (int z = -h; z <= h; ++z) {
        const Coord q{c[0] + x * s, c[1] + y * s, c[2] + z * s};
        const int32_t j = set.find(q);
        if (j >= 0) out.push_back({j, Coord{-x * s, -y * s, -z * s}});
      }
  std::sort(out.begin(), out.end(),
            [](const Neighbor& a, const Neighbor& b) { return a.row < b.row; });
  return out;
}

NeighborLists build_neighbor_lists(const CoordSet& set, int window) {
  if (window < 1 || window % 2 == 0) throw Error("window size must be odd and positive");
  // Rows are in lexicographic coordinate order, so for a fixed (dx, dy)
  // column the window targets of consecutive rows only move forward. One
  // cursor per column gives a linear sweep with sequential memory access,
  // and visiting columns in (dx, dy) order emits each list already sorted
  // by row. The hash index stays for single queries.
  const int h = (window - 1) / 2;
  const int32_t s = set.stride();
  const auto& coords = set.coords();
  const std::size_t n = coords.size();
  const int columns = window * window;
  std::vector<std::size_t> cursor(static_cast<std::size_t>(columns), 0);
  NeighborLists nl;
  nl.window = window;
  nl.begin.reserve(n + 1);
  nl.begin.push_back(0);
  for (std::size_t i = 0; i < n; ++i) {
    const Coord& c = coords[i];
    int col = 0;
    for (int x = -h; x <= h; ++x)
      for (int y = -h; y <= h; ++y, ++col) {
        const Coord lo{c[0] + x * s, c[1] + y * s, c[2] - h * s};
        std::size_t& k = cursor[static_cast<std::size_t>(col)];
        while (k < n && coords[k] < lo) ++k;
        for (std::size_t j = k; j < n; ++j) {
          const Coord& q = coords[j];
          if (q[0] != lo[0] || q[1] != lo[1] || q[2] > c[2] + h * s) break;
          const int32_t dz = (q[2] - c[2]) / s;
          // (c_i - c_j) / stride = (-x, -y, -dz)
          nl.rows.push_back(static_cast<int32_t>(j));
          nl.offset_ids.push_back(((-x + h) * window + (-y + h)) * window + (-dz + h));
        }
      }
    nl.begin.push_back(static_cast<int32_t>(nl.rows.size()));
  }
  return nl;
}

std::size_t KernelMap::pair_count() const {
  std::size_t n = 0;
  for (const auto& v : in_rows) n += v.size();
  return n;
}

KernelMap build_conv_map(const CoordSet& in, const CoordSet& out, int kernel) {
  const auto offs = kernel_offsets(kernel);
  if (out.stride() % in.stride() != 0) throw Error("output stride must be a multiple of input stride");
  KernelMap map;
  map.kernel = kernel;
  map.in_rows.resize(offs.size());
  map.out_rows.resize(offs.size());
  const int32_t s = in.stride();
  for (std::size_t o = 0; o < out.size(); ++o) {
    const Coord& c = out[o];
    for (std::size_t m = 0; m < offs.size(); ++m) {
      const int32_t j =
          in.find({c[0] + offs[m][0] * s, c[1] + offs[m][1] * s, c[2] + offs[m][2] * s});
      if (j < 0) continue;
      map.in_rows[m].push_back(j);
      map.out_rows[m].push_back(static_cast<int32_t>(o));
    }
  }
  return map;
}

KernelMap build_up_map(const CoordSet& coarse, const CoordSet& fine, int kernel) {
  if (coarse.stride() != 2 * fine.stride())
    throw Error("up-sampling target must be exactly one stride step finer");
  const auto offs = kernel_offsets(kernel);
  KernelMap map;
  map.kernel = kernel;
  map.in_rows.resize(offs.size());
  map.out_rows.resize(offs.size());
  const int32_t s = coarse.stride();
  for (std::size_t t = 0; t < fine.size(); ++t) {
    const Coord& f = fine[t];
    const Coord p{floor_div(f[0], s) * s, floor_div(f[1], s) * s, floor_div(f[2], s) * s};
    for (std::size_t m = 0; m < offs.size(); ++m) {
      const int32_t j =
          coarse.find({p[0] + offs[m][0] * s, p[1] + offs[m][1] * s, p[2] + offs[m][2] * s});
      if (j < 0) continue;
      map.in_rows[m].push_back(j);
      map.out_rows[m].push_back(static_cast<int32_t>(t));
    }
  }
  return map;
}

GeometryPyramid::GeometryPyramid(std::vector<Coord> level0, int depth) {
  if (depth < 0) throw Error("pyramid depth must be non-negative");
  if (level0.empty()) throw Error("pyramid requires a non-empty coordinate set");
  levels_.push_back(CoordSet::create(std::move(level0), 1));
  for (int l = 1; l <= depth; ++l) {
    const int32_t stride = 1 << l;
    levels_.push_back(CoordSet::create(downsample_coords(levels_.back()->coords(), stride), stride));
  }
}

const CoordSetPtr& GeometryPyramid::level(int l) const {
  if (l < 0 || l > depth()) throw Error("pyramid level " + std::to_string(l) + " does not exist");
  return levels_[static_cast<std::size_t>(l)];
}

int GeometryPyramid::level_of(const CoordSet& set) const {
  for (std::size_t l = 0; l < levels_.size(); ++l)
    if (levels_[l].get() == &set) return static_cast<int>(l);
  return -1;
}

std::shared_ptr<const KernelMap> GeometryPyramid::conv_map(int in_level, int out_level,
                                                          int kernel) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto key = std::make_tuple(0, in_level, out_level, kernel);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    auto map = std::make_shared<const KernelMap>(
        build_conv_map(*level(in_level), *level(out_level), kernel));
    it = cache_.emplace(key, std::move(map)).first;
  }
  return it->second;
}

std::shared_ptr<const KernelMap> GeometryPyramid::up_map(int coarse_level, int fine_level,
                                                        int kernel) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto key = std::make_tuple(1, coarse_level, fine_level, kernel);
  auto it = cache_.find(key);
  if (it == cache_.end()) {
    auto map = std::make_shared<const KernelMap>(
        build_up_map(*level(coarse_level), *level(fine_level), kernel));
    it = cache_.emplace(key, std::move(map)).first;
  }
  return it->second;
}

std::shared_ptr<const NeighborLists> GeometryPyramid::neighbor_lists(int lvl, int window) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto key = std::make_pair(lvl, window);
  auto it = neighbor_cache_.find(key);
  if (it == neighbor_cache_.end()) {
    auto nl = std::make_shared<const NeighborLists>(build_neighbor_lists(*level(lvl), window));
    it = neighbor_cache_.emplace(key, std::move(nl)).first;
  }
  return it->second;
}

void ConvLayer::init(ParamStore<float>& params, Rng& rng, double gain) const {
  const Eigen::Index fan_in = offsets() * c_in;
  params.add(weight_name(), fan_in_uniform(fan_in, c_out, fan_in, rng, gain));
  params.add(bias_name(), fan_in_uniform(1, c_out, fan_in, rng, gain));
}

template <typename T>
Var<T> kernel_conv(Tape<T>& tape, const Var<T>& feats, const Var<T>& weight, const Var<T>& bias,
                   std::shared_ptr<const KernelMap> map_ptr, Eigen::Index n_out) {
  if (!map_ptr) throw Error("kernel_conv: null kernel map");
  const KernelMap& map = *map_ptr;
  const Eigen::Index c_in = feats->value.cols();
  const Eigen::Index k3 = static_cast<Eigen::Index>(map.in_rows.size());
  if (weight->value.rows() != k3 * c_in)
    throw Error("convolution width mismatch: features have " + std::to_string(c_in) +
                " channels, weights expect " + std::to_string(weight->value.rows() / std::max<Eigen::Index>(1, k3)));
  const Eigen::Index c_out = weight->value.cols();
  if (bias->value.rows() != 1 || bias->value.cols() != c_out) throw Error("convolution bias shape mismatch");

  Mat<T> out(n_out, c_out);
  out.rowwise() = bias->value.row(0);
  Mat<T> gathered, product;
  for (Eigen::Index m = 0; m < k3; ++m) {
    const auto& in_rows = map.in_rows[static_cast<std::size_t>(m)];
    const auto& out_rows = map.out_rows[static_cast<std::size_t>(m)];
    if (in_rows.empty()) continue;
    gathered = feats->value(in_rows, Eigen::all);
    product.noalias() = gathered * weight->value.middleRows(m * c_in, c_in);
    for (std::size_t r = 0; r < out_rows.size(); ++r)
      out.row(out_rows[r]) += product.row(static_cast<Eigen::Index>(r));
  }

  return tape.apply(std::move(out), {feats, weight, bias},
                    [feats, weight, bias, map_ptr, c_in, k3](const Mat<T>& g) {
    const KernelMap& map = *map_ptr;
    accumulate(bias, g.colwise().sum());
    Mat<T> g_rows, a_rows, d_in;
    for (Eigen::Index m = 0; m < k3; ++m) {
      const auto& in_rows = map.in_rows[static_cast<std::size_t>(m)];
      const auto& out_rows = map.out_rows[static_cast<std::size_t>(m)];
      if (in_rows.empty()) continue;
      g_rows = g(out_rows, Eigen::all);
      if (feats->requires_grad) {
        d_in.noalias() = g_rows * weight->value.middleRows(m * c_in, c_in).transpose();
        auto& dx = feats->grad_buffer();
        for (std::size_t r = 0; r < in_rows.size(); ++r)
          dx.row(in_rows[r]) += d_in.row(static_cast<Eigen::Index>(r));
      }
      if (weight->requires_grad) {
        a_rows = feats->value(in_rows, Eigen::all);
        weight->grad_buffer().middleRows(m * c_in, c_in).noalias() += a_rows.transpose() * g_rows;
      }
    }
  });
}

namespace {

template <typename T>
void check_layer(const ConvLayer& layer, const SparseTensor<T>& x) {
  if (x.channels() != layer.c_in)
    throw Error("layer '" + layer.name + "' expects " + std::to_string(layer.c_in) +
                " input channels, got " + std::to_string(x.channels()));
}

}  // namespace

template <typename T>
SparseTensor<T> sparse_conv(Tape<T>& tape, const ParamStore<T>& params, const ConvLayer& layer,
                            const SparseTensor<T>& x, const GeometryPyramid& pyr) {
  check_layer(layer, x);
  const int lvl = pyr.level_of(*x.coords);
  if (lvl < 0) throw Error("sparse_conv: input coordinates are not a pyramid level");
  int out_lvl = lvl;
  if (layer.stride == 2) {
    out_lvl = lvl + 1;
    if (out_lvl > pyr.depth()) throw Error("sparse_conv: no coarser pyramid level for stride 2");
  } else if (layer.stride != 1) {
    throw Error("sparse_conv: stride must be 1 or 2");
  }
  auto map = pyr.conv_map(lvl, out_lvl, layer.kernel);
  const auto& out_coords = pyr.level(out_lvl);
  auto f = kernel_conv(tape, x.feats, params.get(layer.weight_name()), params.get(layer.bias_name()),
                       map, static_cast<Eigen::Index>(out_coords->size()));
  return {out_coords, f};
}

template <typename T>
SparseTensor<T> sparse_conv(Tape<T>& tape, const ParamStore<T>& params, const ConvLayer& layer,
                            const SparseTensor<T>& x) {
  check_layer(layer, x);
  if (layer.stride != 1) throw Error("sparse_conv without a pyramid supports stride 1 only");
  auto map = std::make_shared<const KernelMap>(build_conv_map(*x.coords, *x.coords, layer.kernel));
  auto f = kernel_conv(tape, x.feats, params.get(layer.weight_name()), params.get(layer.bias_name()),
                       std::move(map), static_cast<Eigen::Index>(x.size()));
  return {x.coords, f};
}

template <typename T>
SparseTensor<T> sparse_conv_up(Tape<T>& tape, const ParamStore<T>& params, const ConvLayer& layer,
                               const SparseTensor<T>& x, const GeometryPyramid& pyr,
                               const CoordSetPtr& target) {
  check_layer(layer, x);
  const int lvl = pyr.level_of(*x.coords);
  const int tgt = pyr.level_of(*target);
  if (lvl < 0 || tgt < 0) throw Error("sparse_conv_up: coordinates are not pyramid levels");
  if (tgt != lvl - 1) throw Error("sparse_conv_up: target level not one stride step finer");
  auto map = pyr.up_map(lvl, tgt, layer.kernel);
  auto f = kernel_conv(tape, x.feats, params.get(layer.weight_name()), params.get(layer.bias_name()),
                       map, static_cast<Eigen::Index>(target->size()));
  return {target, f};
}

#define ROPC_INSTANTIATE(T)                                                                    \
  template Var<T> kernel_conv<T>(Tape<T>&, const Var<T>&, const Var<T>&, const Var<T>&,        \
                                 std::shared_ptr<const KernelMap>, Eigen::Index);                              \
  template SparseTensor<T> sparse_conv<T>(Tape<T>&, const ParamStore<T>&, const ConvLayer&,    \
                                          const SparseTensor<T>&, const GeometryPyramid&);     \
  template SparseTensor<T> sparse_conv<T>(Tape<T>&, const ParamStore<T>&, const ConvLayer&,    \
                                          const SparseTensor<T>&);                             \
  template SparseTensor<T> sparse_conv_up<T>(Tape<T>&, const ParamStore<T>&, const ConvLayer&, \
                                             const SparseTensor<T>&, const GeometryPyramid&,   \
                                             const CoordSetPtr&);
ROPC_INSTANTIATE(float)
ROPC_INSTANTIATE(double)
#undef ROPC_INSTANTIATE

}  // namespace ropc
