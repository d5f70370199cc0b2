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

// Synthetic scenes shared by the tests and the acceptance runner.

#pragma once

#include <cmath>
#include <set>
#include <vector>

#include "ropc/io_formats.hpp"
#include "ropc/range_coder.hpp"
#include "ropc/sparse_tensor.hpp"

namespace ropc::testing {

// Distinct random voxels on a stride lattice.
inline std::vector<Coord> random_coords(std::size_t n, int32_t extent, Rng& rng, int32_t stride = 1) {
  std::set<Coord> seen;
  std::vector<Coord> out;
  while (out.size() < n) {
    Coord c;
    for (auto& v : c) v = static_cast<int32_t>(rng.below(static_cast<uint64_t>(extent))) * stride;
    if (seen.insert(c).second) out.push_back(c);
  }
  return out;
}

inline MatD randn(Eigen::Index r, Eigen::Index c, Rng& rng) {
  MatD m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

// Voxels within half a unit of a sphere surface, colored with smooth bands
// plus a coarse checker so there is structure at several scales.
inline VoxelCloud textured_sphere(double radius, int32_t offset = 0) {
  std::vector<Coord> coords;
  const int r = static_cast<int>(std::ceil(radius)) + 1;
  for (int x = -r; x <= r; ++x)
    for (int y = -r; y <= r; ++y)
      for (int z = -r; z <= r; ++z) {
        const double d = std::sqrt(double(x * x + y * y + z * z));
        if (std::abs(d - radius) < 0.5) coords.push_back({x + r + offset, y + r + offset, z + r + offset});
      }
  MatF colors(static_cast<Eigen::Index>(coords.size()), 3);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double x = coords[i][0] - r - offset, y = coords[i][1] - r - offset, z = coords[i][2] - r - offset;
    const double theta = std::atan2(z, x);
    const double phi = std::acos(std::clamp(y / radius, -1.0, 1.0));
    const bool check = (static_cast<int>(std::floor(theta * 4 / M_PI)) + static_cast<int>(std::floor(phi * 4 / M_PI))) % 2 == 0;
    const Eigen::Index row = static_cast<Eigen::Index>(i);
    colors(row, 0) = static_cast<float>(0.5 + 0.4 * std::sin(2.0 * theta));
    colors(row, 1) = static_cast<float>(check ? 0.85 : 0.2);
    colors(row, 2) = static_cast<float>(0.5 + 0.4 * std::cos(3.0 * phi));
  }
  return make_voxel_cloud(std::move(coords), colors);
}

// n distinct random voxels in [0, extent)^3 with random colors.
inline VoxelCloud random_cloud(std::size_t n, int32_t extent, Rng& rng) {
  std::set<Coord> seen;
  std::vector<Coord> coords;
  while (coords.size() < n) {
    Coord c{static_cast<int32_t>(rng.below(static_cast<uint64_t>(extent))),
            static_cast<int32_t>(rng.below(static_cast<uint64_t>(extent))),
            static_cast<int32_t>(rng.below(static_cast<uint64_t>(extent)))};
    if (seen.insert(c).second) coords.push_back(c);
  }
  MatF colors(static_cast<Eigen::Index>(n), 3);
  for (Eigen::Index i = 0; i < colors.size(); ++i) colors.data()[i] = static_cast<float>(rng.uniform());
  return make_voxel_cloud(std::move(coords), colors);
}

// Random values with one random table each (or a shared one), including
// values outside the table window so escapes get exercised.
struct CoderCase {
  std::vector<CdfTable> tables;
  std::vector<int32_t> values;
  std::vector<const CdfTable*> per_value;
};

inline CoderCase random_coder_case(Rng& rng, std::size_t max_len = 64) {
  CoderCase c;
  const std::size_t n = rng.below(max_len + 1);
  const std::size_t n_tables = 1 + rng.below(4);
  for (std::size_t t = 0; t < n_tables; ++t) {
    const std::size_t alphabet = 1 + rng.below(rng.below(8) == 0 ? 3000 : 40);
    std::vector<double> m(alphabet);
    const bool skewed = rng.below(2) == 0;
    for (double& v : m) v = skewed ? std::exp(-12.0 * rng.uniform()) : 0.05 + rng.uniform();
    const auto offset = static_cast<int32_t>(rng.below(200)) - 100;
    const int32_t escape = (alphabet > 1 && rng.below(3) != 0) ? static_cast<int32_t>(alphabet - 1) : -1;
    c.tables.push_back(quantize_cdf(m, offset, escape));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const CdfTable& t = c.tables[rng.below(n_tables)];
    c.per_value.push_back(&t);
    const auto window = static_cast<int64_t>(t.escape >= 0 ? t.alphabet() - 1 : t.alphabet());
    int64_t v = t.offset + static_cast<int64_t>(rng.below(static_cast<uint64_t>(window)));
    if (t.escape >= 0 && rng.below(10) == 0) {
      // Anything in int32 outside the window, extremes included.
      switch (rng.below(3)) {
        case 0: v = INT32_MIN; break;
        case 1: v = INT32_MAX; break;
        default: v = t.offset + window + static_cast<int64_t>(rng.below(1u << 20)); break;
      }
      if (v > INT32_MAX) v = INT32_MAX;
    }
    c.values.push_back(static_cast<int32_t>(v));
  }
  return c;
}

}  // namespace ropc::testing
