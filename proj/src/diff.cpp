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

#include "ropc/diff.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

#include "ropc/bytes.hpp"

namespace ropc {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error("read failed: " + path);
  return ss.str();
}

void write_file(const std::string& path, std::string_view data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error("write failed: " + path);
}

void adam_step(ParamStore<float>& params, double lr, const AdamOptions& opt) {
  for (auto& e : params.entries()) {
    if (!e.var->grad_buffer().allFinite())
      throw Error("non-finite gradient in parameter '" + e.name + "'");
  }
  for (auto& e : params.entries()) {
    auto& g = e.var->grad_buffer();
    ++e.step;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(e.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(e.step));
    const float b1 = static_cast<float>(opt.beta1);
    const float b2 = static_cast<float>(opt.beta2);
    e.m = b1 * e.m + (1.0f - b1) * g;
    e.v = b2 * e.v + (1.0f - b2) * g.cwiseAbs2();
    auto& w = e.var->value;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double mhat = e.m.data()[i] / bc1;
      const double vhat = e.v.data()[i] / bc2;
      w.data()[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + opt.eps));
    }
    g.setZero();
  }
}

double clip_grad_norm(ParamStore<float>& params, double max_norm) {
  const double norm = params.grad_norm();
  if (std::isfinite(norm) && norm > max_norm && norm > 0.0)
    params.scale_grad(static_cast<float>(max_norm / norm));
  return norm;
}

double lr_schedule(int epoch, const LrSchedule& s) {
  if (epoch < 0) throw Error("lr_schedule: negative epoch");
  const int decays = epoch / std::max(1, s.period);
  return std::max(s.base * std::pow(s.decay, decays), s.floor);
}

MatF fan_in_uniform(Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in, Rng& rng,
                    double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, fan_in)));
  MatF w(rows, cols);
  for (Eigen::Index i = 0; i < w.size(); ++i)
    w.data()[i] = static_cast<float>(rng.uniform(-bound, bound));
  return w;
}

namespace {
constexpr char kCheckpointMagic[4] = {'R', 'O', 'P', 'W'};
constexpr uint8_t kCheckpointVersion = 1;
}  // namespace

std::string serialize_checkpoint(const ParamStore<float>& params, const std::string& config) {
  ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.u8(kCheckpointVersion);
  w.u32(static_cast<uint32_t>(config.size()));
  w.bytes(config);
  w.u32(static_cast<uint32_t>(params.size()));
  for (const auto& e : params.entries()) {
    if (e.name.size() > std::numeric_limits<uint16_t>::max())
      throw Error("parameter name too long: " + e.name);
    w.u16(static_cast<uint16_t>(e.name.size()));
    w.bytes(e.name);
    w.u8(2);
    w.u32(static_cast<uint32_t>(e.var->value.rows()));
    w.u32(static_cast<uint32_t>(e.var->value.cols()));
  }
  for (const auto& e : params.entries()) {
    const auto& v = e.var->value;
    for (Eigen::Index i = 0; i < v.size(); ++i) w.f32(v.data()[i]);
  }
  return w.take();
}

Checkpoint parse_checkpoint(const std::string& bytes) {
  ByteReader r(bytes);
  if (r.remaining() < 5 || r.bytes(4) != std::string_view(kCheckpointMagic, 4))
    throw Error("not a checkpoint file (bad magic)");
  const uint8_t version = r.u8();
  if (version != kCheckpointVersion)
    throw Error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.config = std::string(r.bytes(r.u32()));
  const uint32_t count = r.u32();
  struct Shape {
    std::string name;
    std::vector<uint32_t> dims;
  };
  std::vector<Shape> manifest;
  for (uint32_t t = 0; t < count; ++t) {
    Shape s;
    s.name = std::string(r.bytes(r.u16()));
    const uint8_t rank = r.u8();
    for (uint8_t d = 0; d < rank; ++d) s.dims.push_back(r.u32());
    manifest.push_back(std::move(s));
  }
  for (const auto& s : manifest) {
    // Rank 0 is a scalar, rank 1 a row vector, higher ranks fold into
    // rows x last-dimension.
    Eigen::Index rows = 1;
    Eigen::Index cols = 1;
    if (!s.dims.empty()) {
      cols = s.dims.back();
      for (std::size_t d = 0; d + 1 < s.dims.size(); ++d) rows *= s.dims[d];
    }
    if (static_cast<std::size_t>(rows * cols) * 4 > r.remaining())
      throw Error("checkpoint truncated in tensor '" + s.name + "'");
    MatF m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.f32();
    ck.params.add(s.name, std::move(m));
  }
  if (r.remaining() != 0) throw Error("trailing bytes after checkpoint payload");
  return ck;
}

void save_checkpoint(const std::string& path, const ParamStore<float>& params,
                     const std::string& config) {
  write_file(path, serialize_checkpoint(params, config));
}

Checkpoint load_checkpoint(const std::string& path) { return parse_checkpoint(read_file(path)); }

}  // namespace ropc
