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

#include "ropc/gradcheck.hpp"

#include <chrono>
#include <functional>
#include <set>

#include "ropc/pipeline.hpp"

namespace ropc {

namespace {

// sum(x .* r) for a fixed r.
template <typename T>
Var<T> project(Tape<T>& tape, const Var<T>& x, const MatD& r) {
  Mat<T> rt = r.cast<T>();
  Mat<T> out(1, 1);
  out(0, 0) = x->value.cwiseProduct(rt).sum();
  return tape.apply(std::move(out), {x}, [x, rt](const Mat<T>& g) { accumulate(x, rt * g(0, 0)); });
}

MatD normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  MatD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

MatD uniform_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double lo, double hi) {
  MatD m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

std::vector<Coord> random_coords(std::size_t n, int32_t extent, Rng& rng) {
  std::set<Coord> seen;
  std::vector<Coord> out;
  while (out.size() < n) {
    Coord c{static_cast<int32_t>(rng.below(static_cast<uint64_t>(extent))),
            static_cast<int32_t>(rng.below(static_cast<uint64_t>(extent))),
            static_cast<int32_t>(rng.below(static_cast<uint64_t>(extent)))};
    if (seen.insert(c).second) out.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}


using SeedCheck = std::function<double(uint64_t seed, const GradcheckOptions&)>;

double check_sparse_conv(uint64_t seed, const GradcheckOptions& opt) {
  Rng rng(seed);
  const auto coords = random_coords(150, 8, rng);
  const GeometryPyramid pyr(coords, 2);
  const ConvLayer a{"gc.a", 3, 1, 4, 5}, b{"gc.b", 3, 2, 5, 6}, u{"gc.u", 3, 2, 6, 3};
  ParamStore<float> store;
  a.init(store, rng);
  b.init(store, rng);
  u.init(store, rng);
  store.add("x", normal_matrix(150, 4, rng).cast<float>());
  const MatD r = normal_matrix(150, 3, rng);
  auto loss = [&](auto& tape, auto& ps) {
    using T = typename std::decay_t<decltype(ps)>::Scalar;
    SparseTensor<T> x{pyr.level(0), ps.get("x")};
    auto h = sparse_conv(tape, ps, a, x, pyr);
    h = sparse_conv(tape, ps, b, h, pyr);
    h = sparse_conv_up(tape, ps, u, h, pyr, pyr.level(0));
    return project(tape, h.feats, r);
  };
  return gradient_error(store, loss, rng, opt);
}

double check_attention(uint64_t seed, const GradcheckOptions& opt, AttentionKind kind) {
  Rng rng(seed);
  const auto set = CoordSet::create(random_coords(120, 6, rng));
  const SPTransBlock block{"gc.attn", 6, 3, kind};
  ParamStore<float> store;
  block.init(store, rng);
  store.add("x", normal_matrix(120, 6, rng).cast<float>());
  const MatD r = normal_matrix(120, 6, rng);
  auto nl = std::make_shared<const NeighborLists>(build_neighbor_lists(*set, block.window));
  auto loss = [&](auto& tape, auto& ps) {
    using T = typename std::decay_t<decltype(ps)>::Scalar;
    SparseTensor<T> x{set, ps.get("x")};
    return project(tape, sp_trans_block(tape, ps, block, x, nl).feats, r);
  };
  return gradient_error(store, loss, rng, opt);
}

double check_gaussian_mass(uint64_t seed, const GradcheckOptions& opt) {
  Rng rng(seed);
  ParamStore<float> store;
  const MatD y = normal_matrix(24, 3, rng, 2.0);
  const MatD sigma = uniform_matrix(24, 3, rng, 0.3, 2.5);
  MatD mu = y;
  for (Eigen::Index i = 0; i < mu.size(); ++i) mu.data()[i] += rng.uniform(-2.0, 2.0) * sigma.data()[i];
  store.add("y", y.cast<float>());
  store.add("mu", mu.cast<float>());
  store.add("sigma", sigma.cast<float>());
  auto loss = [&](auto& tape, auto& ps) {
    return estimate_rate(tape, gaussian_mass(tape, ps.get("y"), ps.get("mu"), ps.get("sigma")));
  };
  return gradient_error(store, loss, rng, opt);
}

double check_factorized_mass(uint64_t seed, const GradcheckOptions& opt) {
  Rng rng(seed);
  FactorizedModel model;
  model.name = "gc.z";
  model.channels = 4;
  ParamStore<float> store;
  model.init(store, rng);
  // Move away from the symmetric initialization.
  for (auto& e : store.entries())
    for (Eigen::Index i = 0; i < e.var->value.size(); ++i) e.var->value.data()[i] += static_cast<float>(0.3 * rng.normal());
  store.add("z", uniform_matrix(30, 4, rng, -6.0, 6.0).cast<float>());
  auto loss = [&](auto& tape, auto& ps) {
    return estimate_rate(tape, factorized_mass(tape, ps, model, ps.get("z")));
  };
  return gradient_error(store, loss, rng, opt);
}

double check_composite(uint64_t seed, const GradcheckOptions& opt) {
  Rng rng(seed);
  const MatD pos = uniform_matrix(100, 3, rng, -1.0, 1.0);
  const Camera cam = make_camera(bounding_sphere(pos), {rng.uniform(-40, 40), rng.uniform(0, 360)}, 24, 24);
  RasterSettings rs;
  rs.radius = 3.0 * 2.0 / 24;
  rs.k = 4;
  rs.background = {rng.uniform(), rng.uniform(), rng.uniform()};
  auto frags = std::make_shared<const FragmentBuffer>(rasterize(pos, cam, rs));
  ParamStore<float> store;
  store.add("colors", uniform_matrix(100, 3, rng, 0.0, 1.0).cast<float>());
  const MatD r = normal_matrix(24 * 24, 3, rng);
  auto loss = [&](auto& tape, auto& ps) {
    return project(tape, composite(tape, frags, ps.get("colors"), rs.background), r);
  };
  return gradient_error(store, loss, rng, opt);
}

double check_ms_ssim(uint64_t seed, const GradcheckOptions& opt) {
  Rng rng(seed);
  const int w = 48, h = 48;
  MatD ref(w * h, 3);
  const double fx = rng.uniform(0.05, 0.3), fy = rng.uniform(0.05, 0.3);
  for (int j = 0; j < h; ++j)
    for (int i = 0; i < w; ++i)
      for (int c = 0; c < 3; ++c)
        ref(j * w + i, c) = 0.5 + 0.3 * std::sin(fx * i + c) * std::cos(fy * j) + 0.05 * rng.normal();
  MatD test = ref + normal_matrix(w * h, 3, rng, 0.05);
  ParamStore<float> store;
  store.add("img", test.cast<float>());
  auto loss = [&](auto& tape, auto& ps) {
    using T = typename std::decay_t<decltype(ps)>::Scalar;
    return ms_ssim_loss(tape, Mat<T>(ref.cast<T>()), ps.get("img"), w, h);
  };
  return gradient_error(store, loss, rng, opt);
}

// Voxels of a small spherical shell (about 150 points).
std::vector<Coord> small_shell() {
  std::vector<Coord> out;
  for (int x = -5; x <= 5; ++x)
    for (int y = -5; y <= 5; ++y)
      for (int z = -5; z <= 5; ++z) {
        const double d = std::sqrt(double(x * x + y * y + z * z));
        if (std::abs(d - 3.6) < 0.5) out.push_back({x + 5, y + 5, z + 5});
      }
  std::sort(out.begin(), out.end());
  return out;
}

double check_rd_loss(uint64_t seed, const GradcheckOptions& opt) {
  Rng rng(seed);
  CodecConfig cfg;
  cfg.width1 = 4;
  cfg.width2 = 6;
  cfg.latent = 4;
  cfg.hyper = 3;
  cfg.attn_blocks = 1;
  cfg.window = 3;
  cfg.final_gain = 1.0;
  const auto coords = small_shell();
  if (coords.size() > 200) throw Error("gradcheck: scene too large");
  VoxelCloud cloud;
  cloud.coords = coords;
  cloud.colors = uniform_matrix(static_cast<Eigen::Index>(coords.size()), 3, rng, 0.0, 1.0).cast<float>();
  RenderSetup setup;
  setup.width = setup.height = 32;
  const TrainScene scene = TrainScene::build(cloud, cfg, parse_rig("0:0,120"), setup);
  CodecModel model = CodecModel::create(cfg, seed);
  const auto noise = draw_noise<double>(scene, cfg, rng);
  const QuantNoise<float> noise_f{noise.y.cast<float>(), noise.z.cast<float>()};
  LossConfig lc;
  lc.lambda = 800.0;
  auto loss = [&](auto& tape, auto& ps) {
    using T = typename std::decay_t<decltype(ps)>::Scalar;
    if constexpr (std::is_same_v<T, float>) {
      return train_forward(tape, ps, cfg, model.z_model, scene, noise_f, lc).loss;
    } else {
      return train_forward(tape, ps, cfg, model.z_model, scene, noise, lc).loss;
    }
  };
  GradcheckOptions o = opt;
  o.samples_per_tensor = std::min(o.samples_per_tensor, 4);
  return gradient_error(model.params, loss, rng, o);
}

const std::vector<std::pair<std::string, SeedCheck>>& registry() {
  static const std::vector<std::pair<std::string, SeedCheck>> r = {
      {"sparse_conv", check_sparse_conv},
      {"sp_trans_block", [](uint64_t s, const GradcheckOptions& o) { return check_attention(s, o, AttentionKind::kCosine); }},
      {"sp_trans_softmax", [](uint64_t s, const GradcheckOptions& o) { return check_attention(s, o, AttentionKind::kSoftmax); }},
      {"gaussian_mass", check_gaussian_mass},
      {"factorized_mass", check_factorized_mass},
      {"composite_backward", check_composite},
      {"ms_ssim", check_ms_ssim},
      {"rd_loss", check_rd_loss},
  };
  return r;
}

}  // namespace

std::vector<std::string> gradcheck_suites() {
  std::vector<std::string> names;
  for (const auto& [name, fn] : registry()) names.push_back(name);
  return names;
}

GradcheckReport run_gradcheck(const std::string& suite, const GradcheckOptions& options) {
  const auto& reg = registry();
  for (std::size_t k = 0; k < reg.size(); ++k) {
    const auto& [name, fn] = reg[k];
    if (name != suite) continue;
    GradcheckReport rep;
    rep.suite = suite;
    const auto t0 = std::chrono::steady_clock::now();
    for (int s = 0; s < options.seeds; ++s) {
      const double err = fn(1000003ULL * static_cast<uint64_t>(s + 1) + 7919ULL * k, options);
      rep.max_error = std::max(rep.max_error, err);
      if (!(err <= options.tolerance)) ++rep.failures;
      ++rep.seeds;
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rep;
  }
  throw Error("unknown gradcheck suite '" + suite + "'");
}

}  // namespace ropc
