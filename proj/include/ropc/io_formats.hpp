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

// File formats: PLY point clouds, voxelization, PPM images and the
// compressed attribute container.
//
// Container layout (little-endian):
//   "ROPC" | version u8 | lambda id u8 | geometry hash u64 | points u32 |
//   z length u32 | z bytes | y length u32 | y bytes

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ropc/common.hpp"
#include "ropc/sparse_tensor.hpp"

namespace ropc {

using Rgb8 = std::array<uint8_t, 3>;

struct RawCloud {
  MatD positions;            // N x 3
  std::vector<Rgb8> colors;  // N
};

struct VoxelCloud {
  std::vector<Coord> coords;  // unique, sorted lexicographically
  MatF colors;                // N x 3 in [0, 1]

  std::size_t size() const { return coords.size(); }
  MatD positions() const;
};

RawCloud parse_ply(std::span<const uint8_t> bytes);
RawCloud read_ply(const std::filesystem::path& path);

enum class PlyEncoding { kAscii, kBinary };

std::vector<uint8_t> format_ply(const RawCloud& cloud, PlyEncoding encoding);
void write_ply(const RawCloud& cloud, const std::filesystem::path& path, PlyEncoding encoding = PlyEncoding::kBinary);

// Integer coordinates and 8-bit colors (round half up).
RawCloud to_raw(const VoxelCloud& cloud);
void write_ply(const VoxelCloud& cloud, const std::filesystem::path& path,
               PlyEncoding encoding = PlyEncoding::kBinary);

uint8_t quantize_unit(double v);

// Clouds whose coordinates are already integers in [0, resolution) are
// taken as they are. Otherwise the bounding box is scaled uniformly from its
// minimum corner into [0, resolution - 1] and rounded; colors landing in the
// same voxel are averaged.
VoxelCloud voxelize(const RawCloud& raw, int resolution = 1024);

// Sorts points lexicographically; duplicates are an error.
VoxelCloud make_voxel_cloud(std::vector<Coord> coords, const MatF& colors);

// PPM (P6, maxval 255). img is (height * width) x 3 in [0, 1].
std::vector<uint8_t> encode_ppm(const MatF& img, int width, int height);
void write_ppm(const MatF& img, int width, int height, const std::filesystem::path& path);

struct PpmImage {
  int width = 0;
  int height = 0;
  MatF pixels;
};
PpmImage decode_ppm(std::span<const uint8_t> bytes);
PpmImage read_ppm(const std::filesystem::path& path);

// FNV-1a 64 over sorted coordinates, each as three int32 little-endian.
uint64_t geometry_hash(std::vector<Coord> coords);

inline constexpr uint8_t kBitstreamVersion = 1;
inline constexpr uint8_t kCustomLambda = 255;
inline constexpr std::array<double, 5> kLambdaMenu = {25000.0, 4000.0, 800.0, 250.0, 85.0};

uint8_t lambda_id(double lambda);

struct Bitstream {
  uint8_t version = kBitstreamVersion;
  uint8_t lambda_id = kCustomLambda;
  uint64_t geometry_hash = 0;
  uint32_t point_count = 0;
  std::vector<uint8_t> z_stream;
  std::vector<uint8_t> y_stream;

  std::vector<uint8_t> serialize() const;
  static Bitstream parse(std::span<const uint8_t> bytes);
  std::size_t byte_size() const { return 4 + 1 + 1 + 8 + 4 + 4 + z_stream.size() + 4 + y_stream.size(); }
};

}  // namespace ropc
