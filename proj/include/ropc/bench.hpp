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

// Timing of the window neighbor search at a fixed point density.

#pragma once

#include <cstdint>
#include <vector>

#include "ropc/sparse_tensor.hpp"

namespace ropc {

// n distinct voxels drawn uniformly from a cube sized so that the expected
// occupancy is `density`.
std::vector<Coord> random_voxels(std::size_t n, double density, uint64_t seed);

struct NeighborTiming {
  std::size_t n = 0;
  double seconds = 0;  // median over repeats
  std::size_t pairs = 0;
};

// Index construction plus the neighborhoods of every point.
NeighborTiming time_window_neighbors(std::size_t n, double density = 0.05, int window = 5, int repeats = 5,
                                     uint64_t seed = 1);

}  // namespace ropc
