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

// ropc: encode, decode, render, train and evaluate point cloud attributes.
//
// Exit codes: 0 success, 1 runtime failure, 2 bad command line.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ropc/bench.hpp"
#include "ropc/gradcheck.hpp"
#include "ropc/io_formats.hpp"
#include "ropc/pipeline.hpp"

namespace {

using namespace ropc;

std::vector<uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (!out) throw Error("write failed: " + path);
}

// "auto" or a positive number; 0 means auto downstream.
double auto_or_number(const std::string& s, const char* flag) {
  if (s == "auto") return 0.0;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && v > 0.0) return v;
  } catch (const std::logic_error&) {
  }
  throw CLI::ValidationError(flag, "expected 'auto' or a positive number, got '" + s + "'");
}

std::array<double, 3> parse_background(const std::string& s) {
  if (s == "white") return {1.0, 1.0, 1.0};
  if (s == "black") return {0.0, 0.0, 0.0};
  throw CLI::ValidationError("--background", "expected white or black");
}

struct EncodeArgs {
  std::string input, model, output;
};

int run_encode(const EncodeArgs& a) {
  const CodecModel model = CodecModel::load(a.model);
  const VoxelCloud cloud = voxelize(read_ply(a.input));
  const EncodeResult r = encode(cloud, model);
  write_bytes(a.output, r.bitstream.serialize());
  std::printf("points=%zu bpp=%.6f estimated_bits=%.1f actual_bits=%.0f (y %.1f, z %.1f estimated)\n", cloud.size(),
              r.bpp(), r.estimated_bits(), r.actual_bits(), r.estimated_bits_y, r.estimated_bits_z);
  return 0;
}

struct DecodeArgs {
  std::string geometry, bitstream, model, output;
};

int run_decode(const DecodeArgs& a) {
  const CodecModel model = CodecModel::load(a.model);
  const VoxelCloud geom = voxelize(read_ply(a.geometry));
  const auto bytes = read_bytes(a.bitstream);
  const DecodeResult r = decode(Bitstream::parse(bytes), geom.coords, model);
  write_ply(r.cloud, a.output);
  std::printf("decoded %zu points\n", r.cloud.size());
  return 0;
}

struct RenderArgs {
  std::string input, output;
  double azimuth = 0, elevation = 0, fov = 60;
  std::string distance = "auto", radius = "auto", background = "white";
  int width = 1024, height = 1024, k = 10;
};

int run_render(const RenderArgs& a) {
  const RawCloud raw = read_ply(a.input);
  MatF colors(raw.positions.rows(), 3);
  for (Eigen::Index i = 0; i < colors.rows(); ++i)
    for (int c = 0; c < 3; ++c) colors(i, c) = raw.colors[static_cast<std::size_t>(i)][c] / 255.0f;
  RasterSettings raster;
  raster.k = a.k;
  raster.radius = auto_or_number(a.radius, "--radius");
  raster.background = parse_background(a.background);
  const Camera cam = make_camera(bounding_sphere(raw.positions), {a.elevation, a.azimuth}, a.width, a.height, a.fov,
                                 auto_or_number(a.distance, "--distance"));
  write_ppm(render(raw.positions, colors, cam, raster), a.width, a.height, a.output);
  return 0;
}

struct TrainArgs {
  std::vector<std::string> data;
  std::string out, rig = "0:0,60,120,180,240,300;90:0;270:0", distortion = "mse";
  double lambda = 800, lr = 1e-4, lr_decay = 0.75;
  int epochs = 1, steps = 0, batch = 1, lr_period = 15, width = 384, height = 384, block = 128;
  uint64_t seed = 1;
};

int run_train(const TrainArgs& a) {
  RunManifest m;
  m.seed = a.seed;
  m.epochs = a.epochs;
  m.steps = a.steps;
  m.batch_size = a.batch;
  m.lr.base = a.lr;
  m.lr.decay = a.lr_decay;
  m.lr.period = a.lr_period;
  m.lambda = a.lambda;
  m.distortion = a.distortion == "ms-ssim" ? Distortion::kMsSsim : Distortion::kMse;
  m.rig = a.rig;
  m.width = a.width;
  m.height = a.height;
  m.data = a.data;
  m.checkpoint = a.out;
  const std::string manifest_path = a.out + ".manifest";
  write_text(manifest_path, m.to_text());

  CodecModel model = CodecModel::create(m.config, m.seed, m.lambda);
  const auto rig = parse_rig(m.rig);
  RenderSetup setup;
  setup.width = m.width;
  setup.height = m.height;
  std::vector<TrainScene> scenes;
  for (const auto& cloud : load_dataset(m.data, a.block)) scenes.push_back(TrainScene::build(cloud, m.config, rig, setup));
  std::fprintf(stderr, "training on %zu patches, manifest %s\n", scenes.size(), manifest_path.c_str());
  TrainOptions opts;
  opts.manifest = m;
  opts.on_step = [](const StepLog& s) {
    std::printf("step=%d epoch=%d loss=%.6f bpp=%.6f distortion=%.6g lr=%.3g\n", s.step, s.epoch, s.loss,
                s.bits_per_point, s.distortion, s.lr);
    std::fflush(stdout);
  };
  train(model, scenes, opts);
  model.save(a.out);
  return 0;
}

struct EvalArgs {
  std::string ref, recon, rig = "0:30,90,150,210,270,330", csv, bitstream, name;
  double lambda = 0;
  int width = 384, height = 384;
};

int run_eval(const EvalArgs& a) {
  const VoxelCloud ref = voxelize(read_ply(a.ref));
  const VoxelCloud recon = voxelize(read_ply(a.recon));
  RenderSetup setup;
  setup.width = a.width;
  setup.height = a.height;
  EvalRow row = evaluate(ref, recon, parse_rig(a.rig), setup);
  row.cloud = a.name.empty() ? std::filesystem::path(a.ref).stem().string() : a.name;
  row.lambda = a.lambda;
  if (!a.bitstream.empty()) {
    const Bitstream bs = Bitstream::parse(read_bytes(a.bitstream));
    if (bs.point_count != ref.size()) throw Error("eval: bitstream point count does not match the reference");
    row.bpp = 8.0 * static_cast<double>(bs.byte_size()) / bs.point_count;
    if (a.lambda == 0 && bs.lambda_id < kLambdaMenu.size()) row.lambda = kLambdaMenu[bs.lambda_id];
  }
  const std::string text = eval_csv_header() + "\n" + eval_csv_row(row) + "\n";
  write_text(a.csv, text);
  std::cout << text;
  return 0;
}

int run_gradcheck_cmd(const std::string& module, int seeds) {
  std::vector<std::string> suites;
  if (module == "all") {
    suites = gradcheck_suites();
  } else {
    suites.push_back(module);
  }
  GradcheckOptions opts;
  opts.seeds = seeds;
  bool ok = true;
  for (const auto& s : suites) {
    const auto r = run_gradcheck(s, opts);
    std::printf("%-20s seeds=%d failures=%d max_rel_error=%.3g time=%.2fs %s\n", r.suite.c_str(), r.seeds,
                r.failures, r.max_error, r.seconds, r.passed() ? "ok" : "FAIL");
    ok = ok && r.passed();
  }
  return ok ? 0 : 1;
}

int run_bench(const std::vector<std::size_t>& ns, double density, int window, int repeats, uint64_t seed) {
  std::printf("n,seconds,pairs,seconds_per_point\n");
  for (const auto n : ns) {
    const auto t = time_window_neighbors(n, density, window, repeats, seed);
    std::printf("%zu,%.6f,%zu,%.4g\n", t.n, t.seconds, t.pairs, t.seconds / static_cast<double>(t.n));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Point cloud attribute codec"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ropc 0.1.0");

  EncodeArgs enc;
  auto* c_enc = app.add_subcommand("encode", "Compress the colors of a point cloud");
  c_enc->add_option("--input", enc.input, "Input PLY")->required()->check(CLI::ExistingFile);
  c_enc->add_option("--model", enc.model, "Model checkpoint")->required()->check(CLI::ExistingFile);
  c_enc->add_option("--output", enc.output, "Output bitstream")->required();

  DecodeArgs dec;
  auto* c_dec = app.add_subcommand("decode", "Reconstruct colors onto known geometry");
  c_dec->add_option("--geometry", dec.geometry, "Geometry PLY (colors ignored)")->required()->check(CLI::ExistingFile);
  c_dec->add_option("--bitstream", dec.bitstream, "Bitstream file")->required()->check(CLI::ExistingFile);
  c_dec->add_option("--model", dec.model, "Model checkpoint")->required()->check(CLI::ExistingFile);
  c_dec->add_option("--output", dec.output, "Output PLY")->required();

  RenderArgs ren;
  auto* c_ren = app.add_subcommand("render", "Splat a point cloud to a PPM image");
  c_ren->add_option("--input", ren.input, "Input PLY")->required()->check(CLI::ExistingFile);
  c_ren->add_option("--azimuth", ren.azimuth, "Azimuth in degrees")->capture_default_str();
  c_ren->add_option("--elevation", ren.elevation, "Elevation in degrees")->capture_default_str();
  c_ren->add_option("--distance", ren.distance, "Camera distance or auto")->capture_default_str();
  c_ren->add_option("--fov", ren.fov, "Vertical field of view, degrees")->check(CLI::Range(1.0, 179.0))->capture_default_str();
  c_ren->add_option("--width", ren.width)->check(CLI::PositiveNumber)->capture_default_str();
  c_ren->add_option("--height", ren.height)->check(CLI::PositiveNumber)->capture_default_str();
  c_ren->add_option("--radius", ren.radius, "Splat radius in NDC or auto")->capture_default_str();
  c_ren->add_option("--k", ren.k, "Fragments kept per pixel")->check(CLI::PositiveNumber)->capture_default_str();
  c_ren->add_option("--background", ren.background, "white or black")
      ->check(CLI::IsMember({"white", "black"}))
      ->capture_default_str();
  c_ren->add_option("--output", ren.output, "Output PPM")->required();

  TrainArgs tr;
  auto* c_tr = app.add_subcommand("train", "Train a model; writes <out>.manifest next to the checkpoint");
  c_tr->add_option("--data", tr.data, "PLY files or directories")->required();
  c_tr->add_option("--lambda", tr.lambda, "Rate-distortion tradeoff")->check(CLI::PositiveNumber)->capture_default_str();
  c_tr->add_option("--epochs", tr.epochs)->check(CLI::PositiveNumber)->capture_default_str();
  c_tr->add_option("--steps", tr.steps, "Total steps, 0 for epochs x patches")->check(CLI::NonNegativeNumber);
  c_tr->add_option("--batch", tr.batch)->check(CLI::PositiveNumber)->capture_default_str();
  c_tr->add_option("--seed", tr.seed)->capture_default_str();
  c_tr->add_option("--lr", tr.lr)->check(CLI::PositiveNumber)->capture_default_str();
  c_tr->add_option("--lr-decay", tr.lr_decay)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  c_tr->add_option("--lr-period", tr.lr_period, "Epochs between decays")->check(CLI::PositiveNumber)->capture_default_str();
  c_tr->add_option("--rig", tr.rig, "elev:az,az;elev:az")->capture_default_str();
  c_tr->add_option("--width", tr.width)->check(CLI::PositiveNumber)->capture_default_str();
  c_tr->add_option("--height", tr.height)->check(CLI::PositiveNumber)->capture_default_str();
  c_tr->add_option("--distortion", tr.distortion)->check(CLI::IsMember({"mse", "ms-ssim"}))->capture_default_str();
  c_tr->add_option("--block", tr.block, "Patch size in voxels")->check(CLI::PositiveNumber)->capture_default_str();
  c_tr->add_option("--out", tr.out, "Checkpoint path")->required();

  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "Render reference and reconstruction; write a metrics CSV");
  c_ev->add_option("--ref", ev.ref, "Reference PLY")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--recon", ev.recon, "Reconstructed PLY")->required()->check(CLI::ExistingFile);
  c_ev->add_option("--rig", ev.rig, "elev:az,az;elev:az")->capture_default_str();
  c_ev->add_option("--csv", ev.csv, "Output CSV")->required();
  c_ev->add_option("--bitstream", ev.bitstream, "Bitstream, for the bpp column")->check(CLI::ExistingFile);
  c_ev->add_option("--lambda", ev.lambda, "Value for the lambda column");
  c_ev->add_option("--name", ev.name, "Cloud name (default: reference file stem)");
  c_ev->add_option("--width", ev.width)->check(CLI::PositiveNumber)->capture_default_str();
  c_ev->add_option("--height", ev.height)->check(CLI::PositiveNumber)->capture_default_str();

  std::string gc_module = "all";
  int gc_seeds = 20;
  auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  std::vector<std::string> modules = gradcheck_suites();
  modules.push_back("all");
  c_gc->add_option("--module", gc_module)->check(CLI::IsMember(modules))->capture_default_str();
  c_gc->add_option("--seeds", gc_seeds)->check(CLI::PositiveNumber)->capture_default_str();

  std::vector<std::size_t> bench_n{10000, 40000, 160000};
  double bench_density = 0.05;
  int bench_window = 5, bench_repeats = 5;
  uint64_t bench_seed = 1;
  auto* c_bn = app.add_subcommand("bench-neighbors", "Time the window neighbor search; CSV to stdout");
  c_bn->add_option("--n", bench_n, "Point counts")->delimiter(',')->capture_default_str();
  c_bn->add_option("--density", bench_density)->check(CLI::Range(1e-6, 1.0))->capture_default_str();
  c_bn->add_option("--window", bench_window)->check(CLI::PositiveNumber)->capture_default_str();
  c_bn->add_option("--repeats", bench_repeats)->check(CLI::PositiveNumber)->capture_default_str();
  c_bn->add_option("--seed", bench_seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  }

  try {
    if (*c_enc) return run_encode(enc);
    if (*c_dec) return run_decode(dec);
    if (*c_ren) return run_render(ren);
    if (*c_tr) return run_train(tr);
    if (*c_ev) return run_eval(ev);
    if (*c_gc) return run_gradcheck_cmd(gc_module, gc_seeds);
    if (*c_bn) return run_bench(bench_n, bench_density, bench_window, bench_repeats, bench_seed);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
