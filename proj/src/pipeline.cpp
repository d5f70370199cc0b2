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

#include "ropc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ropc/bytes.hpp"

namespace ropc {

// ---------------------------------------------------------------------------
// Model

CodecModel CodecModel::create(const CodecConfig& config, uint64_t seed, double lambda) {
  CodecModel m;
  m.config = config;
  m.lambda = lambda;
  m.z_model.channels = config.hyper;
  Rng rng(seed);
  m.net().init(m.params, rng);
  m.z_model.init(m.params, rng);
  return m;
}

void CodecModel::save(const std::filesystem::path& path) const {
  std::ostringstream os;
  os.precision(17);
  os << config.to_text() << "lambda=" << lambda << "\n";
  save_checkpoint(path.string(), params, os.str());
}

CodecModel CodecModel::load(const std::filesystem::path& path) {
  Checkpoint ck = load_checkpoint(path.string());
  CodecModel m;
  m.config = CodecConfig::from_text(ck.config);
  m.z_model.channels = m.config.hyper;
  std::istringstream is(ck.config);
  std::string line;
  while (std::getline(is, line))
    if (line.rfind("lambda=", 0) == 0) m.lambda = std::stod(line.substr(7));
  m.params = std::move(ck.params);
  // Every expected tensor must be present with the right shape.
  ParamStore<float> expected;
  Rng rng(0);
  m.net().init(expected, rng);
  m.z_model.init(expected, rng);
  for (const auto& e : expected.entries()) {
    if (!m.params.contains(e.name)) throw Error("checkpoint lacks parameter '" + e.name + "'");
    const auto& v = m.params.get(e.name)->value;
    if (v.rows() != e.var->value.rows() || v.cols() != e.var->value.cols())
      throw Error("checkpoint parameter '" + e.name + "' has the wrong shape");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Views

std::vector<ViewAngles> parse_rig(const std::string& spec) {
  std::vector<ViewAngles> rig;
  std::istringstream groups(spec);
  std::string group;
  while (std::getline(groups, group, ';')) {
    if (group.empty()) continue;
    const auto colon = group.find(':');
    if (colon == std::string::npos) throw Error("rig: expected 'elevation:azimuth,...' in '" + group + "'");
    double elev = 0.0;
    try {
      elev = std::stod(group.substr(0, colon));
    } catch (const std::exception&) {
      throw Error("rig: bad elevation in '" + group + "'");
    }
    std::istringstream az(group.substr(colon + 1));
    std::string a;
    bool any = false;
    while (std::getline(az, a, ',')) {
      try {
        rig.push_back({elev, std::stod(a)});
      } catch (const std::exception&) {
        throw Error("rig: bad azimuth '" + a + "'");
      }
      any = true;
    }
    if (!any) throw Error("rig: no azimuths in '" + group + "'");
  }
  if (rig.empty()) throw Error("rig: no views");
  return rig;
}

std::string format_rig(const std::vector<ViewAngles>& rig) {
  std::ostringstream os;
  for (std::size_t i = 0; i < rig.size();) {
    if (i) os << ';';
    os << rig[i].elevation << ':' << rig[i].azimuth;
    std::size_t j = i + 1;
    for (; j < rig.size() && rig[j].elevation == rig[i].elevation; ++j) os << ',' << rig[j].azimuth;
    i = j;
  }
  return os.str();
}

std::vector<ViewAngles> training_rig() { return parse_rig("0:0,60,120,180,240,300;90:0;270:0"); }
std::vector<ViewAngles> test_rig() { return parse_rig("0:30,90,150,210,270,330"); }

ViewSet ViewSet::build(const MatD& positions, const std::vector<ViewAngles>& rig, const RenderSetup& setup) {
  if (rig.empty()) throw Error("view set: empty rig");
  ViewSet vs;
  vs.background = setup.raster.background;
  const BoundingSphere sphere = bounding_sphere(positions);
  for (const auto& v : rig) {
    Camera cam = make_camera(sphere, v, setup.width, setup.height, setup.fov_deg);
    vs.frags.push_back(std::make_shared<const FragmentBuffer>(rasterize(positions, cam, setup.raster)));
    vs.cameras.push_back(cam);
  }
  return vs;
}

std::vector<MatD> ViewSet::render(const MatD& colors) const {
  std::vector<MatD> out;
  for (const auto& f : frags) out.push_back(composite(*f, colors, background));
  return out;
}

// ---------------------------------------------------------------------------
// Loss

namespace {

void check_views(std::size_t a, std::size_t b) {
  if (a != b) throw Error("rd_loss: " + std::to_string(a) + " reference views but " + std::to_string(b) + " renders");
  if (a == 0) throw Error("rd_loss: no views");
}

}  // namespace

double rd_loss(double r_y, double r_z, const std::vector<MatD>& ref, const std::vector<MatD>& test,
               const LossConfig& cfg) {
  check_views(ref.size(), test.size());
  double d = 0.0;
  for (std::size_t v = 0; v < ref.size(); ++v) {
    if (ref[v].rows() != test[v].rows() || ref[v].cols() != test[v].cols())
      throw Error("rd_loss: view sizes differ");
    d += cfg.kind == Distortion::kMse ? (ref[v] - test[v]).squaredNorm() / static_cast<double>(ref[v].size())
                                      : 1.0 - ms_ssim(ref[v], test[v], cfg.width, cfg.height);
  }
  return r_y + r_z + cfg.lambda * d / static_cast<double>(ref.size());
}

template <typename T>
Var<T> rd_loss(Tape<T>& tape, const Var<T>& r_y, const Var<T>& r_z, const std::vector<Mat<T>>& ref,
               const std::vector<Var<T>>& test, const LossConfig& cfg) {
  check_views(ref.size(), test.size());
  Var<T> d;
  for (std::size_t v = 0; v < ref.size(); ++v) {
    Var<T> term = cfg.kind == Distortion::kMse ? mse(tape, test[v], tape.constant(ref[v]))
                                               : ms_ssim_loss(tape, ref[v], test[v], cfg.width, cfg.height);
    d = d ? add(tape, d, term) : term;
  }
  d = scale(tape, d, static_cast<T>(cfg.lambda / static_cast<double>(ref.size())));
  return add(tape, add(tape, r_y, r_z), d);
}

// ---------------------------------------------------------------------------
// Forward pass

MatD colors_of(const VoxelCloud& cloud) { return cloud.colors.cast<double>(); }

TrainScene TrainScene::build(const VoxelCloud& cloud, const CodecConfig& config, const std::vector<ViewAngles>& rig,
                             const RenderSetup& setup) {
  if (cloud.size() == 0) throw Error("training scene: empty cloud");
  TrainScene s;
  s.pyramid = std::make_shared<GeometryPyramid>(cloud.coords, config.pyramid_depth());
  s.colors = colors_of(cloud);
  // Pyramid level 0 is sorted like the cloud, so rows line up.
  if (s.pyramid->level(0)->coords() != cloud.coords) throw Error("training scene: cloud is not sorted");
  s.views = ViewSet::build(cloud.positions(), rig, setup);
  s.reference = s.views.render(s.colors);
  return s;
}

std::pair<Eigen::Index, Eigen::Index> latent_rows(const TrainScene& scene, const CodecConfig& config) {
  return {static_cast<Eigen::Index>(scene.pyramid->level(config.stages)->size()),
          static_cast<Eigen::Index>(scene.pyramid->level(config.stages + 1)->size())};
}

template <typename T>
QuantNoise<T> draw_noise(const TrainScene& scene, const CodecConfig& config, Rng& rng) {
  const auto [ny, nz] = latent_rows(scene, config);
  return {uniform_noise<T>(ny, config.latent, rng), uniform_noise<T>(nz, config.hyper, rng)};
}

template <typename T>
ForwardResult<T> train_forward(Tape<T>& tape, const ParamStore<T>& params, const CodecConfig& config,
                               const FactorizedModel& z_model, const TrainScene& scene, const QuantNoise<T>& noise,
                               const LossConfig& loss) {
  const CodecNet net(config);
  const GeometryPyramid& pyr = *scene.pyramid;
  SparseTensor<T> attrs{pyr.level(0), tape.constant((scene.colors.array() - 0.5).matrix().template cast<T>())};
  auto y = net.analysis(tape, params, attrs, pyr);
  auto z = net.hyper_encoder(tape, params, y, pyr);
  SparseTensor<T> z_tilde{z.coords, add_noise(tape, z.feats, noise.z)};
  auto gauss = net.hyper_decoder(tape, params, z_tilde, pyr);
  SparseTensor<T> y_tilde{y.coords, add_noise(tape, y.feats, noise.y)};

  ForwardResult<T> out;
  out.rate_y = estimate_rate(tape, gaussian_mass(tape, y_tilde.feats, gauss.mu.feats, gauss.sigma.feats));
  out.rate_z = estimate_rate(tape, factorized_mass(tape, params, z_model, z_tilde.feats));
  auto rec = net.synthesis(tape, params, y_tilde, pyr);
  out.colors = add_scalar(tape, rec.feats, static_cast<T>(0.5));

  std::vector<Var<T>> renders;
  std::vector<Mat<T>> refs;
  for (std::size_t v = 0; v < scene.views.size(); ++v) {
    renders.push_back(composite(tape, scene.views.frags[v], out.colors, scene.views.background));
    refs.push_back(scene.reference[v].template cast<T>());
  }
  const T per_point = static_cast<T>(1.0 / static_cast<double>(scene.points()));
  LossConfig unit = loss;
  unit.lambda = 1.0;
  out.distortion = rd_loss(tape, tape.constant(Mat<T>::Zero(1, 1)), tape.constant(Mat<T>::Zero(1, 1)), refs,
                           renders, unit);
  out.loss = add(tape, add(tape, scale(tape, out.rate_y, per_point), scale(tape, out.rate_z, per_point)),
                 scale(tape, out.distortion, static_cast<T>(loss.lambda)));
  return out;
}

// ---------------------------------------------------------------------------
// Coding

namespace {

constexpr int32_t kZWindow = 64;
constexpr int32_t kMaxHalfWidth = 127;

int32_t round_to_int(double v) {
  const double r = round_half_away(v);
  if (!(std::abs(r) < 2147483647.0)) throw Error("latent value out of the 32-bit range");
  return static_cast<int32_t>(r);
}

// Fixed window of +-127 bins around round(mu) plus escape. Bins further
// than 12 sigma from mu all sit on the mass floor, so only the core needs erfc.
CdfTable gaussian_table(double mu, double sigma) {
  const double c = std::clamp(round_half_away(mu), -1073741824.0, 1073741824.0);
  const int32_t center = static_cast<int32_t>(c);
  const double core = std::ceil(12.0 * sigma) + 2.0;
  return window_table(center - kMaxHalfWidth, center + kMaxHalfWidth, [&](int32_t v) {
    return std::abs(v - center) <= core ? gaussian_mass(v, mu, sigma) : kMassFloor;
  });
}

struct ZTables {
  std::vector<CdfTable> tables;         // per channel
  std::vector<std::vector<double>> mass;  // per channel over [-64, 64]
};

ZTables z_tables(const CodecModel& model, const ParamStore<double>& pd) {
  ZTables t;
  for (Eigen::Index c = 0; c < model.z_model.channels; ++c) {
    std::vector<double> m;
    for (int32_t v = -kZWindow; v <= kZWindow; ++v) m.push_back(model.z_model.mass(pd, c, static_cast<double>(v)));
    std::size_t i = 0;
    t.tables.push_back(window_table(-kZWindow, kZWindow, [&](int32_t) { return m[i++]; }));
    t.mass.push_back(std::move(m));
  }
  return t;
}

struct CodedLatents {
  std::vector<uint8_t> z_stream, y_stream;
  double bits_y = 0, bits_z = 0;
};

struct Geometry {
  std::shared_ptr<GeometryPyramid> pyramid;
  Eigen::Index y_rows = 0, z_rows = 0;
};

Geometry make_geometry(const std::vector<Coord>& coords, const CodecConfig& config) {
  if (coords.empty()) throw Error("cannot code an empty cloud");
  Geometry g;
  g.pyramid = std::make_shared<GeometryPyramid>(coords, config.pyramid_depth());
  g.y_rows = static_cast<Eigen::Index>(g.pyramid->level(config.stages)->size());
  g.z_rows = static_cast<Eigen::Index>(g.pyramid->level(config.stages + 1)->size());
  return g;
}

GaussianParams<float> entropy_params(const CodecModel& model, const Geometry& g, const std::vector<int32_t>& z_hat) {
  Tape<float> tape(false);
  MatF z(g.z_rows, model.config.hyper);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = static_cast<float>(z_hat[static_cast<std::size_t>(i)]);
  SparseTensor<float> zt{g.pyramid->level(model.config.stages + 1), tape.constant(std::move(z))};
  return model.net().hyper_decoder(tape, model.params, zt, *g.pyramid);
}

CodedLatents code_latents(const std::vector<int32_t>& y_hat, const std::vector<int32_t>& z_hat, const Geometry& g,
                          const CodecModel& model) {
  const auto pd = model.params.cast<double>();
  const ZTables zt = z_tables(model, pd);
  const Eigen::Index hc = model.config.hyper;
  CodedLatents out;
  {
    RangeEncoder enc;
    for (std::size_t i = 0; i < z_hat.size(); ++i) {
      const Eigen::Index c = static_cast<Eigen::Index>(i) % hc;
      const int32_t v = z_hat[i];
      const double p = (v >= -kZWindow && v <= kZWindow) ? zt.mass[static_cast<std::size_t>(c)][static_cast<std::size_t>(v + kZWindow)]
                                                         : model.z_model.mass(pd, c, static_cast<double>(v));
      out.bits_z -= std::log2(p);
      enc.encode(v, zt.tables[static_cast<std::size_t>(c)]);
    }
    out.z_stream = enc.finish();
  }
  const auto gp = entropy_params(model, g, z_hat);
  const MatF& mu = gp.mu.feats->value;
  const MatF& sigma = gp.sigma.feats->value;
  RangeEncoder enc;
  for (std::size_t i = 0; i < y_hat.size(); ++i) {
    const double m = mu.data()[i], s = sigma.data()[i];
    out.bits_y -= std::log2(gaussian_mass(y_hat[i], m, s));
    enc.encode(y_hat[i], gaussian_table(m, s));
  }
  out.y_stream = enc.finish();
  return out;
}

Bitstream assemble(const CodedLatents& coded, const std::vector<Coord>& coords, const CodecModel& model) {
  Bitstream bs;
  bs.lambda_id = lambda_id(model.lambda);
  bs.geometry_hash = geometry_hash(coords);
  bs.point_count = static_cast<uint32_t>(coords.size());
  bs.z_stream = coded.z_stream;
  bs.y_stream = coded.y_stream;
  return bs;
}

}  // namespace

EncodeResult encode(const VoxelCloud& cloud, const CodecModel& model) {
  if (cloud.size() == 0) throw Error("encode: empty cloud");
  const Geometry g = make_geometry(cloud.coords, model.config);
  if (g.pyramid->level(0)->coords() != cloud.coords) throw Error("encode: cloud is not sorted");
  const CodecNet net = model.net();
  Tape<float> tape(false);
  SparseTensor<float> attrs{g.pyramid->level(0), tape.constant((cloud.colors.array() - 0.5f).matrix())};
  auto y = net.analysis(tape, model.params, attrs, *g.pyramid);
  auto z = net.hyper_encoder(tape, model.params, y, *g.pyramid);
  EncodeResult r;
  r.z_hat.resize(static_cast<std::size_t>(z.feats->value.size()));
  for (std::size_t i = 0; i < r.z_hat.size(); ++i) r.z_hat[i] = round_to_int(z.feats->value.data()[i]);
  r.y_hat.resize(static_cast<std::size_t>(y.feats->value.size()));
  for (std::size_t i = 0; i < r.y_hat.size(); ++i) r.y_hat[i] = round_to_int(y.feats->value.data()[i]);
  const CodedLatents coded = code_latents(r.y_hat, r.z_hat, g, model);
  r.estimated_bits_y = coded.bits_y;
  r.estimated_bits_z = coded.bits_z;
  r.bitstream = assemble(coded, cloud.coords, model);
  return r;
}

Bitstream encode_latents(const std::vector<int32_t>& y_hat, const std::vector<int32_t>& z_hat,
                         const std::vector<Coord>& geometry, const CodecModel& model) {
  const Geometry g = make_geometry(geometry, model.config);
  if (y_hat.size() != static_cast<std::size_t>(g.y_rows * model.config.latent) ||
      z_hat.size() != static_cast<std::size_t>(g.z_rows * model.config.hyper))
    throw Error("encode_latents: latent sizes do not match the geometry");
  std::vector<Coord> sorted = geometry;
  std::sort(sorted.begin(), sorted.end());
  return assemble(code_latents(y_hat, z_hat, g, model), sorted, model);
}

DecodeResult decode(const Bitstream& bs, const std::vector<Coord>& geometry, const CodecModel& model) {
  if (bs.point_count != geometry.size())
    throw Error("decode: bitstream holds " + std::to_string(bs.point_count) + " points but the geometry has " +
                std::to_string(geometry.size()));
  if (bs.geometry_hash != geometry_hash(geometry)) throw Error("decode: geometry hash mismatch");
  const Geometry g = make_geometry(geometry, model.config);
  const auto pd = model.params.cast<double>();
  const ZTables zt = z_tables(model, pd);
  const Eigen::Index hc = model.config.hyper;
  DecodeResult out;
  {
    RangeDecoder dec(bs.z_stream);
    out.z_hat.resize(static_cast<std::size_t>(g.z_rows * hc));
    for (std::size_t i = 0; i < out.z_hat.size(); ++i)
      out.z_hat[i] = dec.decode(zt.tables[i % static_cast<std::size_t>(hc)]);
  }
  const auto gp = entropy_params(model, g, out.z_hat);
  const MatF& mu = gp.mu.feats->value;
  const MatF& sigma = gp.sigma.feats->value;
  {
    RangeDecoder dec(bs.y_stream);
    out.y_hat.resize(static_cast<std::size_t>(mu.size()));
    for (std::size_t i = 0; i < out.y_hat.size(); ++i)
      out.y_hat[i] = dec.decode(gaussian_table(mu.data()[i], sigma.data()[i]));
  }
  Tape<float> tape(false);
  MatF y(g.y_rows, model.config.latent);
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = static_cast<float>(out.y_hat[static_cast<std::size_t>(i)]);
  SparseTensor<float> yt{g.pyramid->level(model.config.stages), tape.constant(std::move(y))};
  auto rec = model.net().synthesis(tape, model.params, yt, *g.pyramid);
  out.cloud.coords = g.pyramid->level(0)->coords();
  out.cloud.colors = (rec.feats->value.array() + 0.5f).cwiseMax(0.0f).cwiseMin(1.0f).matrix();
  return out;
}

// ---------------------------------------------------------------------------
// Data

std::vector<Patch> patch_cloud(const VoxelCloud& cloud, int block) {
  if (block < 1) throw Error("patch_cloud: block must be positive");
  std::map<Coord, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Coord key;
    for (std::size_t k = 0; k < 3; ++k) key[k] = floor_div(cloud.coords[i][k], block) * block;
    groups[key].push_back(i);
  }
  std::vector<Patch> out;
  for (const auto& [origin, rows] : groups) {
    Patch p;
    p.origin = origin;
    std::vector<Coord> local(rows.size());
    MatF colors(static_cast<Eigen::Index>(rows.size()), 3);
    for (std::size_t j = 0; j < rows.size(); ++j) {
      for (std::size_t k = 0; k < 3; ++k) local[j][k] = cloud.coords[rows[j]][k] - origin[k];
      colors.row(static_cast<Eigen::Index>(j)) = cloud.colors.row(static_cast<Eigen::Index>(rows[j]));
    }
    p.cloud = make_voxel_cloud(std::move(local), colors);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<VoxelCloud> load_dataset(const std::vector<std::string>& paths, int patch_block) {
  std::vector<std::filesystem::path> files;
  for (const auto& p : paths) {
    if (std::filesystem::is_directory(p)) {
      std::vector<std::filesystem::path> found;
      for (const auto& e : std::filesystem::recursive_directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".ply") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (std::filesystem::exists(p)) {
      files.emplace_back(p);
    } else {
      throw Error("dataset path does not exist: " + p);
    }
  }
  if (files.empty()) throw Error("dataset: no .ply files found");
  std::vector<VoxelCloud> out;
  for (const auto& f : files)
    for (auto& patch : patch_cloud(voxelize(read_ply(f)), patch_block)) out.push_back(std::move(patch.cloud));
  return out;
}

// ---------------------------------------------------------------------------
// Manifest

std::string RunManifest::lr_schedule_id() const {
  std::ostringstream os;
  os << "step(base=" << lr.base << ",decay=" << lr.decay << ",period=" << lr.period << ",floor=" << lr.floor << ")";
  return os.str();
}

std::string RunManifest::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "seed=" << seed << "\n"
     << "epochs=" << epochs << "\n"
     << "steps=" << steps << "\n"
     << "batch_size=" << batch_size << "\n"
     << "lr_schedule=" << lr_schedule_id() << "\n"
     << "lr_base=" << lr.base << "\n"
     << "lr_decay=" << lr.decay << "\n"
     << "lr_period=" << lr.period << "\n"
     << "lr_floor=" << lr.floor << "\n"
     << "clip=" << clip << "\n"
     << "lambda=" << lambda << "\n"
     << "distortion=" << (distortion == Distortion::kMse ? "mse" : "ms-ssim") << "\n"
     << "rig=" << rig << "\n"
     << "width=" << width << "\n"
     << "height=" << height << "\n";
  for (const auto& d : data) os << "data=" << d << "\n";
  os << "checkpoint=" << checkpoint << "\n";
  std::istringstream cfg(config.to_text());
  std::string line;
  while (std::getline(cfg, line)) os << "model." << line << "\n";
  return os.str();
}

RunManifest RunManifest::from_text(const std::string& text) {
  RunManifest m;
  std::istringstream is(text);
  std::string line, model_text;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("manifest line " + std::to_string(line_no) + ": expected key=value");
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    try {
      if (key == "seed") m.seed = std::stoull(val);
      else if (key == "epochs") m.epochs = std::stoi(val);
      else if (key == "steps") m.steps = std::stoi(val);
      else if (key == "batch_size") m.batch_size = std::stoi(val);
      else if (key == "lr_base") m.lr.base = std::stod(val);
      else if (key == "lr_decay") m.lr.decay = std::stod(val);
      else if (key == "lr_period") m.lr.period = std::stoi(val);
      else if (key == "lr_floor") m.lr.floor = std::stod(val);
      else if (key == "clip") m.clip = std::stod(val);
      else if (key == "lambda") m.lambda = std::stod(val);
      else if (key == "distortion") m.distortion = val == "ms-ssim" ? Distortion::kMsSsim : Distortion::kMse;
      else if (key == "rig") m.rig = val;
      else if (key == "width") m.width = std::stoi(val);
      else if (key == "height") m.height = std::stoi(val);
      else if (key == "data") m.data.push_back(val);
      else if (key == "checkpoint") m.checkpoint = val;
      else if (key.rfind("model.", 0) == 0) model_text += key.substr(6) + "=" + val + "\n";
      // lr_schedule is derived from the lr_* fields; other keys are ignored.
    } catch (const std::logic_error&) {
      throw Error("manifest line " + std::to_string(line_no) + ": bad value for " + key);
    }
  }
  m.config = CodecConfig::from_text(model_text);
  return m;
}

// ---------------------------------------------------------------------------
// Training

std::vector<StepLog> train(CodecModel& model, const std::vector<TrainScene>& scenes, const TrainOptions& options) {
  const RunManifest& m = options.manifest;
  if (scenes.empty()) throw Error("train: no training scenes");
  if (m.batch_size < 1 || m.epochs < 1) throw Error("train: batch size and epochs must be positive");
  if (!(m.lambda > 0.0)) throw Error("train: lambda must be positive");
  const std::size_t n = scenes.size();
  const int per_epoch = static_cast<int>((n + static_cast<std::size_t>(m.batch_size) - 1) / static_cast<std::size_t>(m.batch_size));
  const int total = m.steps > 0 ? m.steps : m.epochs * per_epoch;
  LossConfig loss;
  loss.lambda = m.lambda;
  loss.kind = m.distortion;
  loss.width = m.width;
  loss.height = m.height;

  Rng rng(m.seed);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::size_t cursor = n;  // forces a shuffle on the first draw
  std::vector<StepLog> logs;
  for (int step = 0; step < total; ++step) {
    const int epoch = step / per_epoch;
    StepLog log;
    log.step = step;
    log.epoch = epoch;
    model.params.zero_grad();
    for (int b = 0; b < m.batch_size; ++b) {
      if (cursor == n) {
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
        cursor = 0;
      }
      const TrainScene& scene = scenes[order[cursor++]];
      const auto noise = draw_noise<float>(scene, model.config, rng);
      Tape<float> tape;
      const auto fr = train_forward(tape, model.params, model.config, model.z_model, scene, noise, loss);
      const double j = fr.loss->value(0, 0);
      if (!std::isfinite(j))
        throw Error("non-finite loss at step " + std::to_string(step) + "\nmanifest:\n" + m.to_text());
      tape.backward(fr.loss, 1.0f / static_cast<float>(m.batch_size));
      log.loss += j / m.batch_size;
      log.bits_per_point += (fr.rate_y->value(0, 0) + fr.rate_z->value(0, 0)) / scene.points() / m.batch_size;
      log.distortion += fr.distortion->value(0, 0) / m.batch_size;
    }
    clip_grad_norm(model.params, m.clip);
    log.lr = lr_schedule(epoch, m.lr);
    adam_step(model.params, log.lr);
    logs.push_back(log);
    if (options.on_step) options.on_step(log);
    const bool epoch_end = (step + 1) % per_epoch == 0 || step + 1 == total;
    if (options.save_checkpoints && epoch_end && !m.checkpoint.empty()) model.save(m.checkpoint);
  }
  return logs;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalRow evaluate(const VoxelCloud& ref, const VoxelCloud& recon, const std::vector<ViewAngles>& rig,
                 const RenderSetup& setup) {
  if (ref.coords != recon.coords) throw Error("evaluate: clouds do not share geometry");
  const ViewSet views = ViewSet::build(ref.positions(), rig, setup);
  const auto a = views.render(colors_of(ref));
  const auto b = views.render(colors_of(recon));
  EvalRow row;
  for (std::size_t v = 0; v < a.size(); ++v) {
    row.psnr_y += psnr(a[v], b[v], PsnrChannel::kY);
    row.psnr_yuv611 += psnr_yuv611(a[v], b[v]);
    row.ms_ssim += ms_ssim(a[v], b[v], setup.width, setup.height);
  }
  const double k = static_cast<double>(a.size());
  row.psnr_y /= k;
  row.psnr_yuv611 /= k;
  row.ms_ssim /= k;
  return row;
}

std::string eval_csv_header() { return "cloud,lambda,bpp,psnr_y,psnr_yuv611,ms_ssim"; }

std::string eval_csv_row(const EvalRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, ",%.6g,%.6f,%.4f,%.4f,%.6f", r.lambda, r.bpp, r.psnr_y, r.psnr_yuv611, r.ms_ssim);
  return r.cloud + buf;
}

#define ROPC_INSTANTIATE(T)                                                                            \
  template Var<T> rd_loss<T>(Tape<T>&, const Var<T>&, const Var<T>&, const std::vector<Mat<T>>&,       \
                             const std::vector<Var<T>>&, const LossConfig&);                          \
  template QuantNoise<T> draw_noise<T>(const TrainScene&, const CodecConfig&, Rng&);                   \
  template ForwardResult<T> train_forward<T>(Tape<T>&, const ParamStore<T>&, const CodecConfig&,       \
                                             const FactorizedModel&, const TrainScene&,                \
                                             const QuantNoise<T>&, const LossConfig&);
ROPC_INSTANTIATE(float)
ROPC_INSTANTIATE(double)
#undef ROPC_INSTANTIATE

}  // namespace ropc
