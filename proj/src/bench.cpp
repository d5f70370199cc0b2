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

#include "ropc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <unordered_set>

#include "ropc/common.hpp"

namespace ropc {

std::vector<Coord> random_voxels(std::size_t n, double density, uint64_t seed) {
  if (!(density > 0.0 && density <= 1.0)) throw Error("random_voxels: density must be in (0, 1]");
  const auto extent = static_cast<uint64_t>(std::ceil(std::cbrt(static_cast<double>(n) / density)));
  Rng rng(seed);
  std::unordered_set<uint64_t> seen;
  seen.reserve(n * 2);
  std::vector<Coord> out;
  out.reserve(n);
  while (out.size() < n) {
    const auto x = rng.below(extent), y = rng.below(extent), z = rng.below(extent);
    if (seen.insert((x << 42) | (y << 21) | z).second)
      out.push_back({static_cast<int32_t>(x), static_cast<int32_t>(y), static_cast<int32_t>(z)});
  }
  return out;
}

NeighborTiming time_window_neighbors(std::size_t n, double density, int window, int repeats, uint64_t seed) {
  if (repeats < 1) throw Error("time_window_neighbors: repeats must be positive");
  const auto coords = random_voxels(n, density, seed);
  std::vector<double> times;
  NeighborTiming out;
  out.n = n;
  for (int r = 0; r < repeats; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto set = CoordSet::create(coords);
    const auto lists = build_neighbor_lists(*set, window);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
    out.pairs = lists.pair_count();
  }
  std::nth_element(times.begin(), times.begin() + times.size() / 2, times.end());
  out.seconds = times[times.size() / 2];
  return out;
}

}  // namespace ropc
