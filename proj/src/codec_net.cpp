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

#include "ropc/codec_net.hpp"

#include <map>
#include <sstream>

namespace ropc {

std::string CodecConfig::to_text() const {
  std::ostringstream os;
  os << "attr_channels=" << attr_channels << "\n"
     << "width1=" << width1 << "\n"
     << "width2=" << width2 << "\n"
     << "latent=" << latent << "\n"
     << "hyper=" << hyper << "\n"
     << "stages=" << stages << "\n"
     << "attn_blocks=" << attn_blocks << "\n"
     << "window=" << window << "\n"
     << "kernel=" << kernel << "\n"
     << "final_gain=" << final_gain << "\n"
     << "attention=" << (attention == AttentionKind::kCosine ? "cosine" : "softmax") << "\n";
  return os.str();
}

CodecConfig CodecConfig::from_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  CodecConfig c;
  auto get_int = [&](const char* key, auto& field) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    try {
      field = static_cast<std::remove_reference_t<decltype(field)>>(std::stoll(it->second));
    } catch (const std::exception&) {
      throw Error(std::string("config: bad integer for ") + key);
    }
  };
  get_int("attr_channels", c.attr_channels);
  get_int("width1", c.width1);
  get_int("width2", c.width2);
  get_int("latent", c.latent);
  get_int("hyper", c.hyper);
  get_int("stages", c.stages);
  get_int("attn_blocks", c.attn_blocks);
  get_int("window", c.window);
  get_int("kernel", c.kernel);
  if (auto it = kv.find("final_gain"); it != kv.end()) c.final_gain = std::stod(it->second);
  if (auto it = kv.find("attention"); it != kv.end())
    c.attention = it->second == "softmax" ? AttentionKind::kSoftmax : AttentionKind::kCosine;
  if (c.stages < 1) throw Error("config: stages must be >= 1");
  return c;
}

void ResBlock::init(ParamStore<float>& params, Rng& rng) const {
  conv0().init(params, rng);
  conv1().init(params, rng);
}

template <typename T>
SparseTensor<T> ResBlock::forward(Tape<T>& tape, const ParamStore<T>& params, const SparseTensor<T>& x,
                                  const GeometryPyramid& pyr) const {
  auto h = sparse_conv(tape, params, conv0(), x, pyr);
  h.feats = relu(tape, h.feats);
  h = sparse_conv(tape, params, conv1(), h, pyr);
  return {x.coords, add(tape, x.feats, h.feats)};
}

template <typename T>
Var<T> positive_scale(Tape<T>& tape, const Var<T>& raw) {
  return add_scalar(tape, softplus(tape, raw), static_cast<T>(kScaleFloor));
}

CodecNet::CodecNet(CodecConfig config) : config_(config) {
  if (config_.stages < 1) throw Error("codec needs at least one down-sampling stage");
}

std::vector<ConvLayer> CodecNet::conv_layers() const {
  const auto& c = config_;
  std::vector<ConvLayer> layers = {
      conv("analysis.conv0", c.attr_channels, c.width1),
      conv("analysis.conv1", c.width1, c.width2),
  };
  for (int s = 0; s < c.stages; ++s)
    layers.push_back(conv("analysis.down" + std::to_string(s), c.width2, c.width2, 2));
  layers.push_back(conv("analysis.out", c.width2, c.latent));
  layers.push_back(conv("synthesis.in", c.latent, c.width2));
  for (int s = 0; s < c.stages; ++s)
    layers.push_back(conv("synthesis.up" + std::to_string(s), c.width2, c.width2, 2));
  layers.push_back(conv("synthesis.conv1", c.width2, c.width1));
  layers.push_back(conv("synthesis.out", c.width1, c.attr_channels));
  layers.push_back(conv("hyper_enc.conv0", c.latent, c.latent));
  layers.push_back(conv("hyper_enc.down", c.latent, c.hyper, 2));
  layers.push_back(conv("hyper_dec.up", c.hyper, c.latent, 2));
  layers.push_back(conv("hyper_dec.out", c.latent, 2 * c.latent));
  return layers;
}

std::vector<SPTransBlock> CodecNet::attention_blocks() const {
  std::vector<SPTransBlock> blocks;
  for (int k = 0; k < config_.attn_blocks; ++k) blocks.push_back(attention("analysis.attn" + std::to_string(k)));
  for (int k = 0; k < config_.attn_blocks; ++k) blocks.push_back(attention("synthesis.attn" + std::to_string(k)));
  return blocks;
}

std::vector<ResBlock> CodecNet::res_blocks() const {
  std::vector<ResBlock> blocks;
  for (int s = 0; s < config_.stages; ++s)
    blocks.push_back({"analysis.res" + std::to_string(s), config_.width2, config_.kernel});
  for (int s = 0; s < config_.stages; ++s)
    blocks.push_back({"synthesis.res" + std::to_string(s), config_.width2, config_.kernel});
  return blocks;
}

void CodecNet::init(ParamStore<float>& params, Rng& rng) const {
  for (const auto& layer : conv_layers())
    layer.init(params, rng, layer.name == "analysis.out" ? config_.final_gain : 1.0);
  for (const auto& block : res_blocks()) block.init(params, rng);
  for (const auto& block : attention_blocks()) block.init(params, rng);
}

void CodecNet::check_pyramid(const GeometryPyramid& pyr) const {
  if (pyr.depth() < config_.stages)
    throw Error("pyramid depth " + std::to_string(pyr.depth()) + " is less than the " +
                std::to_string(config_.stages) + " stages of the transform");
}

template <typename T>
SparseTensor<T> CodecNet::analysis(Tape<T>& tape, const ParamStore<T>& params,
                                   const SparseTensor<T>& attrs, const GeometryPyramid& pyr) const {
  check_pyramid(pyr);
  if (attrs.coords != pyr.level(0)) throw Error("analysis: attributes must sit on pyramid level 0");
  const auto& c = config_;
  auto x = sparse_conv(tape, params, conv("analysis.conv0", c.attr_channels, c.width1), attrs, pyr);
  x.feats = relu(tape, x.feats);
  x = sparse_conv(tape, params, conv("analysis.conv1", c.width1, c.width2), x, pyr);
  x.feats = relu(tape, x.feats);
  for (int s = 0; s < c.stages; ++s) {
    x = ResBlock{"analysis.res" + std::to_string(s), c.width2, c.kernel}.forward(tape, params, x, pyr);
    x = sparse_conv(tape, params, conv("analysis.down" + std::to_string(s), c.width2, c.width2, 2), x, pyr);
    x.feats = relu(tape, x.feats);
  }
  auto nl = pyr.neighbor_lists(c.stages, c.window);
  for (int k = 0; k < c.attn_blocks; ++k)
    x = sp_trans_block(tape, params, attention("analysis.attn" + std::to_string(k)), x, nl);
  return sparse_conv(tape, params, conv("analysis.out", c.width2, c.latent), x, pyr);
}

template <typename T>
SparseTensor<T> CodecNet::synthesis(Tape<T>& tape, const ParamStore<T>& params,
                                    const SparseTensor<T>& y_hat, const GeometryPyramid& pyr) const {
  check_pyramid(pyr);
  const auto& c = config_;
  if (y_hat.coords != pyr.level(c.stages)) throw Error("synthesis: latents must sit on the coarsest codec level");
  auto x = sparse_conv(tape, params, conv("synthesis.in", c.latent, c.width2), y_hat, pyr);
  auto nl = pyr.neighbor_lists(c.stages, c.window);
  for (int k = 0; k < c.attn_blocks; ++k)
    x = sp_trans_block(tape, params, attention("synthesis.attn" + std::to_string(k)), x, nl);
  for (int s = 0; s < c.stages; ++s) {
    const int target = c.stages - 1 - s;
    x = sparse_conv_up(tape, params, conv("synthesis.up" + std::to_string(s), c.width2, c.width2, 2), x,
                       pyr, pyr.level(target));
    x.feats = relu(tape, x.feats);
    x = ResBlock{"synthesis.res" + std::to_string(s), c.width2, c.kernel}.forward(tape, params, x, pyr);
  }
  x = sparse_conv(tape, params, conv("synthesis.conv1", c.width2, c.width1), x, pyr);
  x.feats = relu(tape, x.feats);
  return sparse_conv(tape, params, conv("synthesis.out", c.width1, c.attr_channels), x, pyr);
}

template <typename T>
SparseTensor<T> CodecNet::hyper_encoder(Tape<T>& tape, const ParamStore<T>& params, const SparseTensor<T>& y,
                                        const GeometryPyramid& pyr) const {
  const auto& c = config_;
  if (pyr.depth() < c.stages + 1) throw Error("hyper_encoder: pyramid has no level " + std::to_string(c.stages + 1));
  if (y.coords != pyr.level(c.stages)) throw Error("hyper_encoder: latents must sit on the coarsest codec level");
  auto x = sparse_conv(tape, params, conv("hyper_enc.conv0", c.latent, c.latent), y, pyr);
  x.feats = relu(tape, x.feats);
  return sparse_conv(tape, params, conv("hyper_enc.down", c.latent, c.hyper, 2), x, pyr);
}

template <typename T>
GaussianParams<T> CodecNet::hyper_decoder(Tape<T>& tape, const ParamStore<T>& params,
                                          const SparseTensor<T>& z_hat, const GeometryPyramid& pyr) const {
  const auto& c = config_;
  if (pyr.depth() < c.stages + 1) throw Error("hyper_decoder: pyramid has no level " + std::to_string(c.stages + 1));
  if (z_hat.coords != pyr.level(c.stages + 1)) throw Error("hyper_decoder: hyperpriors must sit one level below the latents");
  auto x = sparse_conv_up(tape, params, conv("hyper_dec.up", c.hyper, c.latent, 2), z_hat, pyr,
                          pyr.level(c.stages));
  x.feats = relu(tape, x.feats);
  x = sparse_conv(tape, params, conv("hyper_dec.out", c.latent, 2 * c.latent), x, pyr);
  GaussianParams<T> out;
  out.mu = {x.coords, slice_cols(tape, x.feats, 0, c.latent)};
  out.sigma = {x.coords, positive_scale(tape, slice_cols(tape, x.feats, c.latent, c.latent))};
  return out;
}

#define ROPC_INSTANTIATE(T)                                                                        \
  template SparseTensor<T> ResBlock::forward<T>(Tape<T>&, const ParamStore<T>&,                    \
                                                const SparseTensor<T>&, const GeometryPyramid&) const; \
  template Var<T> positive_scale<T>(Tape<T>&, const Var<T>&);                                      \
  template SparseTensor<T> CodecNet::analysis<T>(Tape<T>&, const ParamStore<T>&,                   \
                                                 const SparseTensor<T>&, const GeometryPyramid&) const; \
  template SparseTensor<T> CodecNet::synthesis<T>(Tape<T>&, const ParamStore<T>&,                  \
                                                  const SparseTensor<T>&, const GeometryPyramid&) const; \
  template SparseTensor<T> CodecNet::hyper_encoder<T>(Tape<T>&, const ParamStore<T>&,              \
                                                      const SparseTensor<T>&, const GeometryPyramid&) const; \
  template GaussianParams<T> CodecNet::hyper_decoder<T>(Tape<T>&, const ParamStore<T>&,            \
                                                        const SparseTensor<T>&, const GeometryPyramid&) const;
ROPC_INSTANTIATE(float)
ROPC_INSTANTIATE(double)
#undef ROPC_INSTANTIATE

}  // namespace ropc
