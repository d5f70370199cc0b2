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

#include "ropc/io_formats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <sstream>

#include "ropc/bytes.hpp"

namespace ropc {

namespace {

std::string_view as_chars(std::span<const uint8_t> b) {
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

std::vector<uint8_t> as_bytes(const std::string& s) { return {s.begin(), s.end()}; }

std::vector<uint8_t> load(const std::filesystem::path& path) { return as_bytes(read_file(path.string())); }

// ---------------------------------------------------------------------------
// PLY

enum class Scalar { kI8, kU8, kI16, kU16, kI32, kU32, kF32, kF64 };

bool parse_scalar(const std::string& name, Scalar& out) {
  static const std::map<std::string, Scalar> kNames = {
      {"char", Scalar::kI8},    {"int8", Scalar::kI8},     {"uchar", Scalar::kU8},   {"uint8", Scalar::kU8},
      {"short", Scalar::kI16},  {"int16", Scalar::kI16},   {"ushort", Scalar::kU16}, {"uint16", Scalar::kU16},
      {"int", Scalar::kI32},    {"int32", Scalar::kI32},   {"uint", Scalar::kU32},   {"uint32", Scalar::kU32},
      {"float", Scalar::kF32},  {"float32", Scalar::kF32}, {"double", Scalar::kF64}, {"float64", Scalar::kF64}};
  auto it = kNames.find(name);
  if (it == kNames.end()) return false;
  out = it->second;
  return true;
}

std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::kI8:
    case Scalar::kU8:
      return 1;
    case Scalar::kI16:
    case Scalar::kU16:
      return 2;
    case Scalar::kI32:
    case Scalar::kU32:
    case Scalar::kF32:
      return 4;
    case Scalar::kF64:
      return 8;
  }
  return 0;
}

bool is_float(Scalar s) { return s == Scalar::kF32 || s == Scalar::kF64; }

struct Property {
  std::string name;
  Scalar type = Scalar::kF32;
  bool is_list = false;
  Scalar count_type = Scalar::kU8;
};

struct Element {
  std::string name;
  uint64_t count = 0;
  std::vector<Property> props;
};

struct Header {
  bool binary = false;
  std::vector<Element> elements;
  std::size_t body = 0;  // byte offset of the data section
};

[[noreturn]] void header_error(std::size_t line, const std::string& what) {
  throw Error("ply: line " + std::to_string(line) + ": " + what);
}

Header parse_header(std::string_view text) {
  Header h;
  std::size_t pos = 0, line_no = 0;
  bool saw_format = false;
  auto next_line = [&](std::string& line) {
    if (pos >= text.size()) return false;
    std::size_t e = text.find('\n', pos);
    if (e == std::string_view::npos) e = text.size();
    line.assign(text.substr(pos, e - pos));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = std::min(text.size(), e + 1);
    ++line_no;
    return true;
  };
  std::string line;
  if (!next_line(line) || line != "ply") header_error(1, "missing 'ply' magic");
  while (true) {
    if (!next_line(line)) header_error(line_no + 1, "missing end_header");
    std::istringstream ss(line);
    std::string key;
    ss >> key;
    if (key.empty() || key == "comment" || key == "obj_info") continue;
    if (key == "end_header") break;
    if (key == "format") {
      std::string fmt, ver;
      ss >> fmt >> ver;
      if (fmt == "ascii") {
        h.binary = false;
      } else if (fmt == "binary_little_endian") {
        h.binary = true;
      } else {
        header_error(line_no, "unsupported format '" + fmt + "'");
      }
      saw_format = true;
    } else if (key == "element") {
      Element e;
      std::string count;
      ss >> e.name >> count;
      uint64_t c = 0;
      auto [p, ec] = std::from_chars(count.data(), count.data() + count.size(), c);
      if (e.name.empty() || ec != std::errc() || p != count.data() + count.size())
        header_error(line_no, "malformed element line");
      e.count = c;
      h.elements.push_back(std::move(e));
    } else if (key == "property") {
      if (h.elements.empty()) header_error(line_no, "property before any element");
      Property prop;
      std::string type;
      ss >> type;
      if (type == "list") {
        std::string ct, it;
        ss >> ct >> it >> prop.name;
        prop.is_list = true;
        if (!parse_scalar(ct, prop.count_type) || !parse_scalar(it, prop.type) || is_float(prop.count_type))
          header_error(line_no, "bad list property types");
      } else {
        ss >> prop.name;
        if (!parse_scalar(type, prop.type)) header_error(line_no, "unknown property type '" + type + "'");
      }
      if (prop.name.empty()) header_error(line_no, "property without a name");
      h.elements.back().props.push_back(std::move(prop));
    } else {
      header_error(line_no, "unexpected keyword '" + key + "'");
    }
  }
  if (!saw_format) header_error(line_no, "missing format line");
  h.body = pos;
  return h;
}

// Sequential value source over either encoding.
class BodyReader {
 public:
  BodyReader(std::string_view data, bool binary) : data_(data), binary_(binary) {}

  double read(Scalar t) {
    if (binary_) return read_binary(t);
    return read_ascii(t);
  }

 private:
  double read_binary(Scalar t) {
    const std::size_t n = scalar_size(t);
    if (data_.size() - pos_ < n) throw Error("ply: unexpected end of data");
    unsigned char b[8];
    std::memcpy(b, data_.data() + pos_, n);
    pos_ += n;
    uint64_t u = 0;
    for (std::size_t i = 0; i < n; ++i) u |= static_cast<uint64_t>(b[i]) << (8 * i);
    switch (t) {
      case Scalar::kI8:
        return static_cast<int8_t>(u);
      case Scalar::kU8:
        return static_cast<uint8_t>(u);
      case Scalar::kI16:
        return static_cast<int16_t>(u);
      case Scalar::kU16:
        return static_cast<uint16_t>(u);
      case Scalar::kI32:
        return static_cast<int32_t>(u);
      case Scalar::kU32:
        return static_cast<uint32_t>(u);
      case Scalar::kF32:
        return std::bit_cast<float>(static_cast<uint32_t>(u));
      case Scalar::kF64:
        return std::bit_cast<double>(u);
    }
    return 0.0;
  }

  double read_ascii(Scalar) {
    while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    if (pos_ >= data_.size()) throw Error("ply: unexpected end of data");
    std::size_t e = pos_;
    while (e < data_.size() && !std::isspace(static_cast<unsigned char>(data_[e]))) ++e;
    double v = 0.0;
    auto [p, ec] = std::from_chars(data_.data() + pos_, data_.data() + e, v);
    if (ec != std::errc() || p != data_.data() + e)
      throw Error("ply: malformed number '" + std::string(data_.substr(pos_, e - pos_)) + "'");
    pos_ = e;
    return v;
  }

  std::string_view data_;
  bool binary_;
  std::size_t pos_ = 0;
};

double color_to_byte(double v, Scalar t) {
  if (is_float(t)) v = std::floor(std::clamp(v, 0.0, 1.0) * 255.0 + 0.5);
  if (t == Scalar::kU16) v = std::floor(v / 257.0 + 0.5);
  return std::clamp(v, 0.0, 255.0);
}

}  // namespace

RawCloud parse_ply(std::span<const uint8_t> bytes) {
  const std::string_view text = as_chars(bytes);
  const Header h = parse_header(text);
  const Element* vertex = nullptr;
  for (const auto& e : h.elements)
    if (e.name == "vertex") vertex = &e;
  if (!vertex) throw Error("ply: no vertex element");
  int ix[3] = {-1, -1, -1}, ic[3] = {-1, -1, -1};
  const char* xyz[3] = {"x", "y", "z"};
  const char* rgb[3] = {"red", "green", "blue"};
  for (std::size_t p = 0; p < vertex->props.size(); ++p) {
    const auto& prop = vertex->props[p];
    for (int k = 0; k < 3; ++k) {
      if (prop.is_list) continue;
      if (prop.name == xyz[k]) ix[k] = static_cast<int>(p);
      if (prop.name == rgb[k]) ic[k] = static_cast<int>(p);
    }
  }
  for (int k = 0; k < 3; ++k) {
    if (ix[k] < 0) throw Error(std::string("ply: missing vertex property '") + xyz[k] + "'");
    if (ic[k] < 0) throw Error(std::string("ply: missing color property '") + rgb[k] + "'");
  }
  if (vertex->count > (uint64_t{1} << 31)) throw Error("ply: vertex count too large");
  // Every stored value takes at least one byte, so a count beyond the data
  // size is certainly truncated.
  if (vertex->count > text.size()) throw Error("ply: unexpected end of data");

  RawCloud cloud;
  const Eigen::Index n = static_cast<Eigen::Index>(vertex->count);
  cloud.positions.resize(n, 3);
  cloud.colors.resize(static_cast<std::size_t>(n));
  BodyReader in(text.substr(h.body), h.binary);
  std::vector<double> vals;
  for (const auto& e : h.elements) {
    for (uint64_t r = 0; r < e.count; ++r) {
      vals.assign(e.props.size(), 0.0);
      for (std::size_t p = 0; p < e.props.size(); ++p) {
        const auto& prop = e.props[p];
        if (prop.is_list) {
          const double cnt = in.read(prop.count_type);
          if (cnt < 0 || cnt > 1e7) throw Error("ply: bad list length");
          for (int64_t k = 0; k < static_cast<int64_t>(cnt); ++k) in.read(prop.type);
        } else {
          vals[p] = in.read(prop.type);
        }
      }
      if (&e != vertex) continue;
      const Eigen::Index i = static_cast<Eigen::Index>(r);
      for (int k = 0; k < 3; ++k) {
        cloud.positions(i, k) = vals[static_cast<std::size_t>(ix[k])];
        const auto& cp = vertex->props[static_cast<std::size_t>(ic[k])];
        cloud.colors[static_cast<std::size_t>(r)][static_cast<std::size_t>(k)] =
            static_cast<uint8_t>(color_to_byte(vals[static_cast<std::size_t>(ic[k])], cp.type));
      }
      if (!cloud.positions.row(i).allFinite()) throw Error("ply: non-finite coordinate");
    }
    if (&e == vertex) break;  // later elements are not needed
  }
  return cloud;
}

RawCloud read_ply(const std::filesystem::path& path) {
  try {
    return parse_ply(load(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

std::vector<uint8_t> format_ply(const RawCloud& cloud, PlyEncoding encoding) {
  if (cloud.positions.cols() != 3 || static_cast<std::size_t>(cloud.positions.rows()) != cloud.colors.size())
    throw Error("ply: positions and colors disagree");
  const bool binary = encoding == PlyEncoding::kBinary;
  std::ostringstream head;
  head << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
       << "element vertex " << cloud.colors.size() << "\n"
       << "property double x\nproperty double y\nproperty double z\n"
       << "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  std::string out = head.str();
  if (binary) {
    ByteWriter w;
    for (std::size_t i = 0; i < cloud.colors.size(); ++i) {
      for (int k = 0; k < 3; ++k) w.u64(std::bit_cast<uint64_t>(cloud.positions(static_cast<Eigen::Index>(i), k)));
      for (int k = 0; k < 3; ++k) w.u8(cloud.colors[i][static_cast<std::size_t>(k)]);
    }
    out += w.str();
  } else {
    char buf[64];
    for (std::size_t i = 0; i < cloud.colors.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        // Shortest representation that reads back to the same double.
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, cloud.positions(static_cast<Eigen::Index>(i), k));
        out.append(buf, p);
        out += ' ';
      }
      out += std::to_string(cloud.colors[i][0]) + ' ' + std::to_string(cloud.colors[i][1]) + ' ' +
             std::to_string(cloud.colors[i][2]) + '\n';
    }
  }
  return as_bytes(out);
}

void write_ply(const RawCloud& cloud, const std::filesystem::path& path, PlyEncoding encoding) {
  const auto bytes = format_ply(cloud, encoding);
  write_file(path.string(), as_chars(bytes));
}

uint8_t quantize_unit(double v) {
  if (!(v > 0.0)) return 0;  // also maps NaN to 0
  return static_cast<uint8_t>(std::min(255.0, std::floor(v * 255.0 + 0.5)));
}

MatD VoxelCloud::positions() const {
  MatD p(static_cast<Eigen::Index>(coords.size()), 3);
  for (std::size_t i = 0; i < coords.size(); ++i)
    for (int k = 0; k < 3; ++k) p(static_cast<Eigen::Index>(i), k) = coords[i][static_cast<std::size_t>(k)];
  return p;
}

RawCloud to_raw(const VoxelCloud& cloud) {
  RawCloud raw;
  raw.positions = cloud.positions();
  raw.colors.resize(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    for (int k = 0; k < 3; ++k)
      raw.colors[i][static_cast<std::size_t>(k)] = quantize_unit(cloud.colors(static_cast<Eigen::Index>(i), k));
  return raw;
}

void write_ply(const VoxelCloud& cloud, const std::filesystem::path& path, PlyEncoding encoding) {
  write_ply(to_raw(cloud), path, encoding);
}

VoxelCloud make_voxel_cloud(std::vector<Coord> coords, const MatF& colors) {
  if (static_cast<Eigen::Index>(coords.size()) != colors.rows() || colors.cols() != 3)
    throw Error("voxel cloud: coordinates and colors disagree");
  std::vector<std::size_t> order(coords.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return coords[a] < coords[b]; });
  VoxelCloud out;
  out.coords.resize(coords.size());
  out.colors.resize(colors.rows(), 3);
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.coords[i] = coords[order[i]];
    out.colors.row(static_cast<Eigen::Index>(i)) = colors.row(static_cast<Eigen::Index>(order[i]));
    if (i > 0 && out.coords[i] == out.coords[i - 1]) throw Error("voxel cloud: duplicate coordinate");
  }
  return out;
}

VoxelCloud voxelize(const RawCloud& raw, int resolution) {
  const Eigen::Index n = raw.positions.rows();
  if (n == 0) throw Error("voxelize: empty cloud");
  if (resolution < 2) throw Error("voxelize: resolution must be at least 2");
  if (raw.positions.cols() != 3 || static_cast<std::size_t>(n) != raw.colors.size())
    throw Error("voxelize: positions and colors disagree");
  bool integral = true;
  for (Eigen::Index i = 0; i < raw.positions.size() && integral; ++i) {
    const double v = raw.positions.data()[i];
    integral = v == std::floor(v) && v >= 0.0 && v < resolution;
  }
  std::vector<Coord> grid(static_cast<std::size_t>(n));
  if (integral) {
    for (Eigen::Index i = 0; i < n; ++i)
      for (int k = 0; k < 3; ++k) grid[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
          static_cast<int32_t>(raw.positions(i, k));
  } else {
    const Eigen::RowVector3d lo = raw.positions.colwise().minCoeff();
    const double extent = (raw.positions.colwise().maxCoeff() - lo).maxCoeff();
    if (!(extent > 0.0)) throw Error("voxelize: cloud has zero extent");
    const double scale = (resolution - 1) / extent;
    for (Eigen::Index i = 0; i < n; ++i)
      for (int k = 0; k < 3; ++k) {
        const double v = std::round((raw.positions(i, k) - lo(k)) * scale);
        grid[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] =
            static_cast<int32_t>(std::clamp(v, 0.0, resolution - 1.0));
      }
  }
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return grid[a] < grid[b]; });
  VoxelCloud out;
  std::vector<std::array<double, 4>> acc;
  for (std::size_t idx : order) {
    if (out.coords.empty() || out.coords.back() != grid[idx]) {
      out.coords.push_back(grid[idx]);
      acc.push_back({0, 0, 0, 0});
    }
    auto& a = acc.back();
    for (std::size_t k = 0; k < 3; ++k) a[k] += raw.colors[idx][k] / 255.0;
    a[3] += 1.0;
  }
  out.colors.resize(static_cast<Eigen::Index>(acc.size()), 3);
  for (std::size_t i = 0; i < acc.size(); ++i)
    for (int k = 0; k < 3; ++k)
      out.colors(static_cast<Eigen::Index>(i), k) = static_cast<float>(acc[i][static_cast<std::size_t>(k)] / acc[i][3]);
  return out;
}

// ---------------------------------------------------------------------------
// PPM

std::vector<uint8_t> encode_ppm(const MatF& img, int width, int height) {
  if (width <= 0 || height <= 0 || img.rows() != static_cast<Eigen::Index>(width) * height || img.cols() != 3)
    throw Error("ppm: image does not match its size");
  std::string head = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  std::vector<uint8_t> out(head.begin(), head.end());
  out.reserve(out.size() + static_cast<std::size_t>(img.size()));
  for (Eigen::Index i = 0; i < img.rows(); ++i)
    for (int c = 0; c < 3; ++c) out.push_back(quantize_unit(img(i, c)));
  return out;
}

void write_ppm(const MatF& img, int width, int height, const std::filesystem::path& path) {
  const auto bytes = encode_ppm(img, width, height);
  write_file(path.string(), as_chars(bytes));
}

PpmImage decode_ppm(std::span<const uint8_t> bytes) {
  const std::string_view s = as_chars(bytes);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < s.size()) {
      if (s[pos] == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t b = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (b == pos) throw Error("ppm: truncated header");
    return std::string(s.substr(b, pos - b));
  };
  auto number = [&]() {
    const std::string t = token();
    int v = 0;
    auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || p != t.data() + t.size() || v <= 0) throw Error("ppm: bad header value '" + t + "'");
    return v;
  };
  if (token() != "P6") throw Error("ppm: not a binary P6 file");
  PpmImage img;
  img.width = number();
  img.height = number();
  if (number() != 255) throw Error("ppm: only maxval 255 is supported");
  ++pos;  // single whitespace before the raster
  const std::size_t need = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3;
  if (s.size() < pos || s.size() - pos < need) throw Error("ppm: truncated raster");
  img.pixels.resize(static_cast<Eigen::Index>(img.width) * img.height, 3);
  for (std::size_t i = 0; i < need; ++i)
    img.pixels.data()[i] = static_cast<float>(static_cast<uint8_t>(s[pos + i]) / 255.0);
  return img;
}

PpmImage read_ppm(const std::filesystem::path& path) { return decode_ppm(load(path)); }

// ---------------------------------------------------------------------------
// Container

uint64_t geometry_hash(std::vector<Coord> coords) {
  std::sort(coords.begin(), coords.end());
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& c : coords)
    for (int32_t v : c) {
      const uint32_t u = static_cast<uint32_t>(v);
      for (int b = 0; b < 4; ++b) {
        h ^= (u >> (8 * b)) & 0xFF;
        h *= 0x100000001b3ULL;
      }
    }
  return h;
}

uint8_t lambda_id(double lambda) {
  for (std::size_t i = 0; i < kLambdaMenu.size(); ++i)
    if (lambda == kLambdaMenu[i]) return static_cast<uint8_t>(i);
  return kCustomLambda;
}

std::vector<uint8_t> Bitstream::serialize() const {
  ByteWriter w;
  w.bytes("ROPC");
  w.u8(version);
  w.u8(lambda_id);
  w.u64(geometry_hash);
  w.u32(point_count);
  w.u32(static_cast<uint32_t>(z_stream.size()));
  w.bytes(as_chars(z_stream));
  w.u32(static_cast<uint32_t>(y_stream.size()));
  w.bytes(as_chars(y_stream));
  return as_bytes(w.str());
}

Bitstream Bitstream::parse(std::span<const uint8_t> bytes) {
  try {
    ByteReader r(as_chars(bytes));
    if (r.bytes(4) != "ROPC") throw Error("bad magic");
    Bitstream b;
    b.version = r.u8();
    if (b.version != kBitstreamVersion) throw Error("unsupported version " + std::to_string(b.version));
    b.lambda_id = r.u8();
    b.geometry_hash = r.u64();
    b.point_count = r.u32();
    auto z = r.bytes(r.u32());
    b.z_stream.assign(z.begin(), z.end());
    auto y = r.bytes(r.u32());
    b.y_stream.assign(y.begin(), y.end());
    if (r.remaining() != 0) throw Error("trailing bytes");
    return b;
  } catch (const Error& e) {
    throw Error(std::string("bitstream: ") + e.what());
  }
}

}  // namespace ropc
