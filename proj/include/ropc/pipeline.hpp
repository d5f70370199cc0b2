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

// End-to-end codec: model bundle, rate-distortion loss, encode/decode,
// training and evaluation.
//
// Colors enter the analysis transform shifted to [-0.5, 0.5] and the
// synthesis output is shifted back, so an all-zero network predicts mid gray.

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ropc/codec_net.hpp"
#include "ropc/entropy.hpp"
#include "ropc/io_formats.hpp"
#include "ropc/metrics.hpp"
#include "ropc/range_coder.hpp"
#include "ropc/renderer.hpp"

namespace ropc {

// Network, entropy model and parameters.
struct CodecModel {
  CodecConfig config;
  FactorizedModel z_model;
  ParamStore<float> params;
  double lambda = 800.0;

  static CodecModel create(const CodecConfig& config, uint64_t seed, double lambda = 800.0);
  CodecNet net() const { return CodecNet(config); }

  void save(const std::filesystem::path& path) const;
  static CodecModel load(const std::filesystem::path& path);
};

// ---------------------------------------------------------------------------
// Views

// "elev:az,az,...;elev:az,..." in degrees.
std::vector<ViewAngles> parse_rig(const std::string& spec);
std::string format_rig(const std::vector<ViewAngles>& rig);

// Six views around the equator plus straight down and straight up.
std::vector<ViewAngles> training_rig();
// Six equatorial views starting at 30 degrees.
std::vector<ViewAngles> test_rig();

struct RenderSetup {
  int width = 384;
  int height = 384;
  double fov_deg = 60.0;
  RasterSettings raster;
};

// Fixed geometry rendered from a set of views; the fragment buffers are
// reused for every color assignment.
struct ViewSet {
  std::vector<Camera> cameras;
  std::vector<std::shared_ptr<const FragmentBuffer>> frags;
  std::array<double, 3> background = {1.0, 1.0, 1.0};

  static ViewSet build(const MatD& positions, const std::vector<ViewAngles>& rig, const RenderSetup& setup);
  std::size_t size() const { return cameras.size(); }
  int width() const { return cameras.empty() ? 0 : cameras.front().width; }
  int height() const { return cameras.empty() ? 0 : cameras.front().height; }

  std::vector<MatD> render(const MatD& colors) const;
};

// ---------------------------------------------------------------------------
// Loss

enum class Distortion { kMse, kMsSsim };

struct LossConfig {
  double lambda = 800.0;
  Distortion kind = Distortion::kMse;
  int width = 384;
  int height = 384;
};

// J = R_y + R_z + lambda * (mean over views of the per-view distortion).
double rd_loss(double r_y, double r_z, const std::vector<MatD>& ref, const std::vector<MatD>& test,
               const LossConfig& cfg);

template <typename T>
Var<T> rd_loss(Tape<T>& tape, const Var<T>& r_y, const Var<T>& r_z, const std::vector<Mat<T>>& ref,
               const std::vector<Var<T>>& test, const LossConfig& cfg);

// ---------------------------------------------------------------------------
// Forward pass used by training and gradient checks

struct TrainScene {
  std::shared_ptr<GeometryPyramid> pyramid;
  MatD colors;  // N x 3 in [0, 1]
  ViewSet views;
  std::vector<MatD> reference;  // ground-truth renders

  static TrainScene build(const VoxelCloud& cloud, const CodecConfig& config, const std::vector<ViewAngles>& rig,
                          const RenderSetup& setup);
  std::size_t points() const { return static_cast<std::size_t>(colors.rows()); }
};

// Uniform noise for y and z; drawn once per step so a step is a pure
// function of the parameters.
template <typename T>
struct QuantNoise {
  Mat<T> y;
  Mat<T> z;
};

template <typename T>
struct ForwardResult {
  Var<T> loss;    // rate per point + lambda * distortion
  Var<T> rate_y;  // bits
  Var<T> rate_z;  // bits
  Var<T> distortion;
  Var<T> colors;  // reconstructed, unclamped
};

// Latent shapes of a scene under a config: (rows of y, rows of z).
std::pair<Eigen::Index, Eigen::Index> latent_rows(const TrainScene& scene, const CodecConfig& config);

template <typename T>
QuantNoise<T> draw_noise(const TrainScene& scene, const CodecConfig& config, Rng& rng);

// Training objective with the rate in bits per point.
template <typename T>
ForwardResult<T> train_forward(Tape<T>& tape, const ParamStore<T>& params, const CodecConfig& config,
                               const FactorizedModel& z_model, const TrainScene& scene, const QuantNoise<T>& noise,
                               const LossConfig& loss);

// ---------------------------------------------------------------------------
// Coding

struct EncodeResult {
  Bitstream bitstream;
  std::vector<int32_t> y_hat;  // row-major over latent rows, then channels
  std::vector<int32_t> z_hat;
  double estimated_bits_y = 0;
  double estimated_bits_z = 0;

  double estimated_bits() const { return estimated_bits_y + estimated_bits_z; }
  double actual_bits() const { return 8.0 * static_cast<double>(bitstream.byte_size()); }
  double bpp() const { return actual_bits() / bitstream.point_count; }
};

EncodeResult encode(const VoxelCloud& cloud, const CodecModel& model);

struct DecodeResult {
  VoxelCloud cloud;
  std::vector<int32_t> y_hat;
  std::vector<int32_t> z_hat;
};

DecodeResult decode(const Bitstream& bitstream, const std::vector<Coord>& geometry, const CodecModel& model);

// Re-serializes decoded latents with the model's tables; equals the
// original stream when coding is lossless on the latents.
Bitstream encode_latents(const std::vector<int32_t>& y_hat, const std::vector<int32_t>& z_hat,
                         const std::vector<Coord>& geometry, const CodecModel& model);

// ---------------------------------------------------------------------------
// Data and training

struct Patch {
  VoxelCloud cloud;  // local coordinates
  Coord origin{};    // global offset of the block
};

std::vector<Patch> patch_cloud(const VoxelCloud& cloud, int block = 128);

struct RunManifest {
  uint64_t seed = 1;
  int epochs = 1;
  int steps = 0;  // 0 runs every patch once per epoch
  int batch_size = 1;
  LrSchedule lr;
  double clip = 10.0;
  double lambda = 800.0;
  Distortion distortion = Distortion::kMse;
  std::string rig = "0:0,60,120,180,240,300;90:0;270:0";
  int width = 384;
  int height = 384;
  std::vector<std::string> data;
  std::string checkpoint;
  CodecConfig config;

  std::string lr_schedule_id() const;
  std::string to_text() const;
  static RunManifest from_text(const std::string& text);
};

struct StepLog {
  int step = 0;
  int epoch = 0;
  double loss = 0;
  double bits_per_point = 0;
  double distortion = 0;
  double lr = 0;
};

struct TrainOptions {
  RunManifest manifest;
  std::function<void(const StepLog&)> on_step;
  bool save_checkpoints = true;
};

// Trains `model` in place on the scenes (all patches of the dataset).
std::vector<StepLog> train(CodecModel& model, const std::vector<TrainScene>& scenes, const TrainOptions& options);

// Loads, voxelizes and patches every PLY under the data paths.
std::vector<VoxelCloud> load_dataset(const std::vector<std::string>& paths, int patch_block = 128);

// ---------------------------------------------------------------------------
// Evaluation

struct EvalRow {
  std::string cloud;
  double lambda = 0;
  double bpp = 0;
  double psnr_y = 0;
  double psnr_yuv611 = 0;
  double ms_ssim = 0;
};

// Renders both clouds with cameras fitted to `ref` and averages the metrics
// over the views. Clouds must share geometry.
EvalRow evaluate(const VoxelCloud& ref, const VoxelCloud& recon, const std::vector<ViewAngles>& rig,
                 const RenderSetup& setup);

std::string eval_csv_header();
std::string eval_csv_row(const EvalRow& row);

// Colors of a voxel cloud as doubles.
MatD colors_of(const VoxelCloud& cloud);

}  // namespace ropc
