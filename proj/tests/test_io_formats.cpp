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

#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "ropc/io_formats.hpp"
#include "support.hpp"

namespace ropc {
namespace {

std::vector<uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

RawCloud random_raw(std::size_t n, Rng& rng) {
  RawCloud c;
  c.positions.resize(static_cast<Eigen::Index>(n), 3);
  c.colors.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < 3; ++k) c.positions(static_cast<Eigen::Index>(i), k) = rng.normal() * 100.0;
    for (auto& v : c.colors[i]) v = static_cast<uint8_t>(rng.below(256));
  }
  return c;
}

TEST(Ply, SinglePointAscii) {
  const std::string text =
      "ply\nformat ascii 1.0\ncomment hi\nelement vertex 1\nproperty float x\nproperty float y\n"
      "property float z\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n"
      "1.5 -2 3 10 20 30\n";
  const RawCloud c = parse_ply(bytes_of(text));
  ASSERT_EQ(c.positions.rows(), 1);
  EXPECT_EQ(c.positions.row(0), Eigen::RowVector3d(1.5, -2, 3));
  EXPECT_EQ(c.colors[0], (Rgb8{10, 20, 30}));
  const RawCloud d = parse_ply(format_ply(c, PlyEncoding::kAscii));
  EXPECT_EQ(d.positions, c.positions);
  EXPECT_EQ(d.colors, c.colors);
}

TEST(Ply, AsciiAndBinaryAgree) {
  Rng rng(1);
  const RawCloud c = random_raw(500, rng);
  for (auto enc : {PlyEncoding::kAscii, PlyEncoding::kBinary}) {
    const RawCloud d = parse_ply(format_ply(c, enc));
    EXPECT_EQ(d.positions, c.positions);
    EXPECT_EQ(d.colors, c.colors);
  }
}

TEST(Ply, ExtraElementsAndFloatColors) {
  const std::string text =
      "ply\r\nformat ascii 1.0\r\nelement vertex 2\r\nproperty double x\r\nproperty double y\r\nproperty double z\r\n"
      "property float nx\r\nproperty float red\r\nproperty float green\r\nproperty float blue\r\n"
      "element face 1\r\nproperty list uchar int vertex_indices\r\nend_header\r\n"
      "0 0 0 1 0 0.5 1\r\n1 1 1 0 1 1 1\r\n3 0 1 1\r\n";
  const RawCloud c = parse_ply(bytes_of(text));
  ASSERT_EQ(c.colors.size(), 2u);
  EXPECT_EQ(c.colors[0], (Rgb8{0, 128, 255}));
}

TEST(Ply, TruncatedBinaryThrows) {
  Rng rng(2);
  const auto full = format_ply(random_raw(20, rng), PlyEncoding::kBinary);
  const std::string head(full.begin(), full.end());
  const std::size_t body = head.find("end_header\n") + 11;
  for (std::size_t n = 0; n < full.size(); n += 1 + n / 50) {
    const std::vector<uint8_t> cut(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(n));
    EXPECT_THROW(parse_ply(cut), Error) << "length " << n;
  }
  EXPECT_NO_THROW(parse_ply(std::vector<uint8_t>(full.begin(), full.end())));
  EXPECT_GT(body, 0u);
}

TEST(Ply, TruncatedAsciiThrows) {
  Rng rng(3);
  auto full = format_ply(random_raw(5, rng), PlyEncoding::kAscii);
  std::string s(full.begin(), full.end());
  s.resize(s.rfind('\n', s.size() - 2) + 1);  // drop the last vertex line
  EXPECT_THROW(parse_ply(bytes_of(s)), Error);
}

TEST(Ply, MissingColorNamed) {
  const std::string text =
      "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\n"
      "property uchar red\nproperty uchar green\nend_header\n0 0 0 1 2\n";
  try {
    parse_ply(bytes_of(text));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("blue"), std::string::npos);
  }
}

TEST(Ply, HeaderErrorsCarryLineNumber) {
  const std::string text = "ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n";
  try {
    parse_ply(bytes_of(text));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_ply(bytes_of("plx\n")), Error);
  EXPECT_THROW(parse_ply(bytes_of("ply\nformat ascii 1.0\n")), Error);
}

TEST(Voxelize, CoincidentPointsAverage) {
  RawCloud c;
  c.positions.resize(3, 3);
  c.positions << 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.5, 1.5, 1.5;
  c.colors = {Rgb8{255, 0, 0}, Rgb8{0, 0, 255}, Rgb8{0, 255, 0}};
  const VoxelCloud v = voxelize(c, 4);
  ASSERT_EQ(v.size(), 2u);
  EXPECT_EQ(v.coords[0], (Coord{0, 0, 0}));
  EXPECT_EQ(v.coords[1], (Coord{3, 3, 3}));
  EXPECT_FLOAT_EQ(v.colors(0, 0), 0.5f);
  EXPECT_FLOAT_EQ(v.colors(0, 1), 0.0f);
  EXPECT_FLOAT_EQ(v.colors(0, 2), 0.5f);
  EXPECT_FLOAT_EQ(v.colors(1, 1), 1.0f);
}

TEST(Voxelize, IntegerInputPassesThrough) {
  Rng rng(4);
  const VoxelCloud src = testing::random_cloud(300, 50, rng);
  const VoxelCloud v = voxelize(to_raw(src), 1024);
  EXPECT_EQ(v.coords, src.coords);
  for (Eigen::Index i = 0; i < src.colors.size(); ++i)
    EXPECT_NEAR(v.colors.data()[i], src.colors.data()[i], 0.5 / 255 + 1e-6);
}

TEST(Voxelize, BinningOracle) {
  Rng rng(5);
  const RawCloud c = random_raw(2000, rng);
  const int res = 64;
  const VoxelCloud v = voxelize(c, res);
  const Eigen::RowVector3d lo = c.positions.colwise().minCoeff();
  const double ext = (c.positions.colwise().maxCoeff() - lo).maxCoeff();
  const double scale = (res - 1) / ext;
  std::map<Coord, std::vector<std::size_t>> bins;
  for (Eigen::Index i = 0; i < c.positions.rows(); ++i) {
    Coord q;
    for (int k = 0; k < 3; ++k) q[static_cast<std::size_t>(k)] = static_cast<int32_t>(std::round((c.positions(i, k) - lo(k)) * scale));
    bins[q].push_back(static_cast<std::size_t>(i));
  }
  ASSERT_EQ(v.size(), bins.size());
  std::size_t i = 0;
  for (const auto& [q, members] : bins) {
    EXPECT_EQ(v.coords[i], q);
    double r = 0;
    for (auto m : members) r += c.colors[m][0] / 255.0;
    EXPECT_NEAR(v.colors(static_cast<Eigen::Index>(i), 0), r / static_cast<double>(members.size()), 1e-6);
    ++i;
  }
}

TEST(Voxelize, Errors) {
  RawCloud c;
  c.positions = MatD::Constant(2, 3, 0.25);
  c.colors.resize(2);
  EXPECT_THROW(voxelize(c), Error);
  EXPECT_THROW(voxelize(RawCloud{}), Error);
}

TEST(VoxelCloud, CanonicalOrderAndDuplicates) {
  MatF col(2, 3);
  col << 1, 0, 0, 0, 1, 0;
  const VoxelCloud v = make_voxel_cloud({Coord{1, 0, 0}, Coord{0, 5, 5}}, col);
  EXPECT_EQ(v.coords[0], (Coord{0, 5, 5}));
  EXPECT_EQ(v.colors(0, 1), 1.0f);
  EXPECT_THROW(make_voxel_cloud({Coord{1, 0, 0}, Coord{1, 0, 0}}, col), Error);
}

TEST(Ppm, WhitePixelBytes) {
  const auto b = encode_ppm(MatF::Ones(1, 3), 1, 1);
  std::string want = "P6\n1 1\n255\n";
  want += "\xff\xff\xff";
  EXPECT_EQ(std::string(b.begin(), b.end()), want);
  EXPECT_EQ(quantize_unit(0.5), 128);
  EXPECT_EQ(quantize_unit(-1.0), 0);
  EXPECT_EQ(quantize_unit(2.0), 255);
}

TEST(Ppm, RoundTrip) {
  Rng rng(6);
  MatF img(12, 3);
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(rng.below(256) / 255.0);
  const PpmImage p = decode_ppm(encode_ppm(img, 4, 3));
  EXPECT_EQ(p.width, 4);
  EXPECT_EQ(p.height, 3);
  EXPECT_LT((p.pixels - img).cwiseAbs().maxCoeff(), 1e-6f);
  auto b = encode_ppm(img, 4, 3);
  b.pop_back();
  EXPECT_THROW(decode_ppm(b), Error);
  EXPECT_THROW(encode_ppm(img, 5, 3), Error);
}

TEST(Bitstream, RoundTripAndErrors) {
  Bitstream b;
  b.lambda_id = lambda_id(800.0);
  b.geometry_hash = 0x1122334455667788ULL;
  b.point_count = 42;
  b.z_stream = {1, 2, 3};
  b.y_stream = {9, 8, 7, 6, 5};
  const auto bytes = b.serialize();
  EXPECT_EQ(bytes.size(), b.byte_size());
  const Bitstream c = Bitstream::parse(bytes);
  EXPECT_EQ(c.lambda_id, 2);
  EXPECT_EQ(c.geometry_hash, b.geometry_hash);
  EXPECT_EQ(c.point_count, 42u);
  EXPECT_EQ(c.z_stream, b.z_stream);
  EXPECT_EQ(c.y_stream, b.y_stream);

  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(Bitstream::parse(bad), Error);
  bad = bytes;
  bad[4] = 9;
  EXPECT_THROW(Bitstream::parse(bad), Error);
  bad = bytes;
  bad.push_back(0);
  EXPECT_THROW(Bitstream::parse(bad), Error);
  for (std::size_t n = 0; n < bytes.size(); ++n)
    EXPECT_THROW(Bitstream::parse(std::span<const uint8_t>(bytes.data(), n)), Error);
}

TEST(Bitstream, LambdaIds) {
  EXPECT_EQ(lambda_id(25000.0), 0);
  EXPECT_EQ(lambda_id(85.0), 4);
  EXPECT_EQ(lambda_id(100.0), kCustomLambda);
}

TEST(GeometryHash, OrderIndependentAndSensitive) {
  Rng rng(7);
  const VoxelCloud c = testing::random_cloud(200, 30, rng);
  std::vector<Coord> shuffled = c.coords;
  std::reverse(shuffled.begin(), shuffled.end());
  EXPECT_EQ(geometry_hash(c.coords), geometry_hash(shuffled));
  shuffled[0][2] += 1;
  EXPECT_NE(geometry_hash(c.coords), geometry_hash(shuffled));
}

}  // namespace
}  // namespace ropc
