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

// Analysis / synthesis transforms and the hyperprior networks.
//
//   analysis:  conv(3->c1)+relu, conv(c1->c2)+relu,
//              [resblock, conv stride 2 + relu] x stages,
//              sp_trans x blocks, conv(c2->latent)
//   synthesis: conv(latent->c2), sp_trans x blocks,
//              [up-conv + relu, resblock] x stages,
//              conv(c2->c1)+relu, conv(c1->3)
//   hyper encoder: conv(latent->latent)+relu, conv stride 2 (latent->hyper)
//   hyper decoder: up-conv(hyper->latent)+relu, conv(latent->2*latent),
//                  split into mu and softplus(raw)+1e-6

#pragma once

#include <string>
#include <vector>

#include "ropc/sp_trans.hpp"

namespace ropc {

struct CodecConfig {
  Eigen::Index attr_channels = 3;
  Eigen::Index width1 = 64;
  Eigen::Index width2 = 128;
  Eigen::Index latent = 128;
  Eigen::Index hyper = 64;
  int stages = 2;         // stride-2 steps in the analysis transform
  int attn_blocks = 2;    // SP-Trans blocks at each end
  int window = 5;
  int kernel = 3;
  double final_gain = 0.1;  // init scale of the last analysis layer
  AttentionKind attention = AttentionKind::kCosine;

  // Levels needed by the pyramid: latents at `stages`, hyperpriors one below.
  int pyramid_depth() const { return stages + 1; }

  std::string to_text() const;
  static CodecConfig from_text(const std::string& text);
};

// channels-preserving: x + conv1(relu(conv0(x)))
struct ResBlock {
  std::string name;
  Eigen::Index channels = 0;
  int kernel = 3;

  ConvLayer conv0() const { return {name + ".conv0", kernel, 1, channels, channels}; }
  ConvLayer conv1() const { return {name + ".conv1", kernel, 1, channels, channels}; }
  void init(ParamStore<float>& params, Rng& rng) const;

  template <typename T>
  SparseTensor<T> forward(Tape<T>& tape, const ParamStore<T>& params, const SparseTensor<T>& x,
                          const GeometryPyramid& pyr) const;
};

template <typename T>
struct GaussianParams {
  SparseTensor<T> mu;
  SparseTensor<T> sigma;
};

class CodecNet {
 public:
  explicit CodecNet(CodecConfig config = {});

  const CodecConfig& config() const { return config_; }

  // Registers every transform parameter.
  void init(ParamStore<float>& params, Rng& rng) const;

  // attrs on pyramid level 0 -> y on level `stages`.
  template <typename T>
  SparseTensor<T> analysis(Tape<T>& tape, const ParamStore<T>& params, const SparseTensor<T>& attrs,
                           const GeometryPyramid& pyr) const;

  // y_hat on level `stages` -> attributes on level 0 (unclamped).
  template <typename T>
  SparseTensor<T> synthesis(Tape<T>& tape, const ParamStore<T>& params, const SparseTensor<T>& y_hat,
                            const GeometryPyramid& pyr) const;

  template <typename T>
  SparseTensor<T> hyper_encoder(Tape<T>& tape, const ParamStore<T>& params, const SparseTensor<T>& y,
                                const GeometryPyramid& pyr) const;

  template <typename T>
  GaussianParams<T> hyper_decoder(Tape<T>& tape, const ParamStore<T>& params,
                                  const SparseTensor<T>& z_hat, const GeometryPyramid& pyr) const;

  // Layer descriptions (public for inspection and tests).
  std::vector<ConvLayer> conv_layers() const;
  std::vector<SPTransBlock> attention_blocks() const;
  std::vector<ResBlock> res_blocks() const;

 private:
  void check_pyramid(const GeometryPyramid& pyr) const;
  ConvLayer conv(const std::string& name, Eigen::Index in, Eigen::Index out, int stride = 1) const {
    return {name, config_.kernel, stride, in, out};
  }
  SPTransBlock attention(const std::string& name) const {
    return {name, config_.width2, config_.window, config_.attention};
  }

  CodecConfig config_;
};

// softplus(x) + 1e-6
template <typename T>
Var<T> positive_scale(Tape<T>& tape, const Var<T>& raw);

inline constexpr double kScaleFloor = 1e-6;

}  // namespace ropc
