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

#include "ropc/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

#include "ropc/parallel.hpp"

namespace ropc {

namespace {

constexpr double kCullDepth = 1e-9;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

}  // namespace

void Camera::validate() const {
  if (!(fov > 0.0 && fov < std::numbers::pi)) throw Error("camera: fov must lie in (0, pi)");
  if (!(near > 0.0 && near < far)) throw Error("camera: need 0 < near < far");
  if (!(aspect > 0.0)) throw Error("camera: aspect must be positive");
  if (width <= 0 || height <= 0) throw Error("camera: image size must be positive");
}

double RasterSettings::radius_for(const Camera& cam) const {
  if (radius > 0.0) return radius;
  return 2.0 / std::min(cam.width, cam.height) * 1.5;
}

Pose look_at(double distance, double elevation_deg, double azimuth_deg, const Eigen::Vector3d& target) {
  if (!(distance > 0.0)) throw Error("look_at: distance must be positive");
  const double el = deg2rad(elevation_deg);
  const double az = deg2rad(azimuth_deg);
  const Eigen::Vector3d offset(distance * std::cos(el) * std::sin(az), distance * std::sin(el),
                               distance * std::cos(el) * std::cos(az));
  const Eigen::Vector3d z_axis = (-offset).normalized();
  Eigen::Vector3d up(0.0, 1.0, 0.0);
  if (up.cross(z_axis).norm() < 1e-9) up = Eigen::Vector3d(0.0, 0.0, 1.0);
  const Eigen::Vector3d x_axis = up.cross(z_axis).normalized();
  const Eigen::Vector3d y_axis = z_axis.cross(x_axis);
  Pose p;
  p.R.row(0) = x_axis.transpose();
  p.R.row(1) = y_axis.transpose();
  p.R.row(2) = z_axis.transpose();
  p.T = -p.R * (offset + target);
  return p;
}

Eigen::Vector3d camera_center(const Pose& pose) { return -pose.R.transpose() * pose.T; }

NdcPoint project(const Eigen::Vector3d& v, const Camera& cam) {
  NdcPoint p;
  if (v.z() <= kCullDepth) {
    p.culled = true;
    return p;
  }
  const double t = std::tan(cam.fov / 2.0);
  p.x = v.x() / (v.z() * t * cam.aspect);
  p.y = v.y() / (v.z() * t);
  p.z = cam.far * (v.z() - cam.near) / (v.z() * (cam.far - cam.near));
  return p;
}

Eigen::Vector2d viewport(double x_ndc, double y_ndc, int width, int height) {
  return {(1.0 - x_ndc) * width / 2.0 - 0.5, (1.0 - y_ndc) * height / 2.0 - 0.5};
}

Eigen::Vector2d pixel_center_ndc(int i, int j, int width, int height) {
  return {1.0 - 2.0 * (i + 0.5) / width, 1.0 - 2.0 * (j + 0.5) / height};
}

FragmentBuffer rasterize(const MatD& positions, const Camera& cam, const RasterSettings& settings) {
  cam.validate();
  if (settings.k < 1) throw Error("rasterize: K must be at least 1");
  if (positions.cols() != 3) throw Error("rasterize: positions must be N x 3");
  const double r = settings.radius_for(cam);
  if (!(r > 0.0)) throw Error("rasterize: radius must be positive");
  const int W = cam.width, H = cam.height;
  const std::size_t n = static_cast<std::size_t>(positions.rows());

  std::vector<NdcPoint> ndc(n);
  parallel_for(0, n, [&](std::size_t i) {
    const Eigen::Vector3d v = cam.R * positions.row(static_cast<Eigen::Index>(i)).transpose() + cam.T;
    ndc[i] = project(v, cam);
  });

  // Pixel rectangle each splat may touch.
  const double rx = r * W / 2.0, ry = r * H / 2.0;
  struct Box {
    int i0, i1, j0, j1;
  };
  std::vector<Box> boxes(n);
  for (std::size_t p = 0; p < n; ++p) {
    Box b{0, -1, 0, -1};
    if (!ndc[p].culled) {
      const Eigen::Vector2d c = viewport(ndc[p].x, ndc[p].y, W, H);
      const double lo_i = std::ceil(c.x() - rx), hi_i = std::floor(c.x() + rx);
      const double lo_j = std::ceil(c.y() - ry), hi_j = std::floor(c.y() + ry);
      if (hi_i >= 0 && lo_i < W && hi_j >= 0 && lo_j < H) {
        b.i0 = static_cast<int>(std::max(lo_i, 0.0));
        b.i1 = static_cast<int>(std::min(hi_i, W - 1.0));
        b.j0 = static_cast<int>(std::max(lo_j, 0.0));
        b.j1 = static_cast<int>(std::min(hi_j, H - 1.0));
      }
    }
    boxes[p] = b;
  }

  const std::size_t pixels = static_cast<std::size_t>(W) * static_cast<std::size_t>(H);
  auto within = [&](std::size_t p, int i, int j, double& d) {
    const Eigen::Vector2d c = pixel_center_ndc(i, j, W, H);
    d = std::hypot(c.x() - ndc[p].x, c.y() - ndc[p].y);
    return d < r;
  };

  std::vector<uint32_t> count(pixels + 1, 0);
  for (std::size_t p = 0; p < n; ++p)
    for (int j = boxes[p].j0; j <= boxes[p].j1; ++j)
      for (int i = boxes[p].i0; i <= boxes[p].i1; ++i) {
        double d;
        if (within(p, i, j, d)) ++count[static_cast<std::size_t>(j) * W + i + 1];
      }
  for (std::size_t q = 0; q < pixels; ++q) count[q + 1] += count[q];
  std::vector<Fragment> cand(count[pixels]);
  {
    std::vector<uint32_t> fill(count.begin(), count.end() - 1);
    for (std::size_t p = 0; p < n; ++p)
      for (int j = boxes[p].j0; j <= boxes[p].j1; ++j)
        for (int i = boxes[p].i0; i <= boxes[p].i1; ++i) {
          double d;
          if (within(p, i, j, d))
            cand[fill[static_cast<std::size_t>(j) * W + i]++] = {static_cast<int32_t>(p), d, ndc[p].z};
        }
  }

  const std::size_t k = static_cast<std::size_t>(settings.k);
  std::vector<uint32_t> kept(pixels + 1, 0);
  parallel_for(0, pixels, [&](std::size_t q) {
    auto b = cand.begin() + count[q], e = cand.begin() + count[q + 1];
    auto closer = [](const Fragment& a, const Fragment& c) {
      return a.depth != c.depth ? a.depth < c.depth : a.point < c.point;
    };
    const std::size_t m = static_cast<std::size_t>(e - b);
    if (m > k) {
      std::partial_sort(b, b + static_cast<std::ptrdiff_t>(k), e, closer);
    } else {
      std::sort(b, e, closer);
    }
    kept[q + 1] = static_cast<uint32_t>(std::min(m, k));
  });

  FragmentBuffer fb;
  fb.width = W;
  fb.height = H;
  fb.radius = r;
  fb.begin.assign(pixels + 1, 0);
  for (std::size_t q = 0; q < pixels; ++q) fb.begin[q + 1] = fb.begin[q] + kept[q + 1];
  fb.frags.resize(fb.begin[pixels]);
  parallel_for(0, pixels, [&](std::size_t q) {
    std::copy_n(cand.begin() + count[q], kept[q + 1], fb.frags.begin() + fb.begin[q]);
  });
  return fb;
}

BlendWeights blend_weights(const FragmentBuffer& fb) {
  BlendWeights bw;
  bw.frag.resize(fb.frags.size());
  bw.residual.resize(fb.pixels());
  const double r2 = fb.radius * fb.radius;
  parallel_for(0, fb.pixels(), [&](std::size_t q) {
    double trans = 1.0;
    for (uint32_t f = fb.begin[q]; f < fb.begin[q + 1]; ++f) {
      const double d = fb.frags[f].dist;
      const double w = 1.0 - d * d / r2;
      bw.frag[f] = w * trans;
      trans *= 1.0 - w;
    }
    bw.residual[q] = trans;
  });
  return bw;
}

namespace {

template <typename T>
Mat<T> composite_with(const FragmentBuffer& fb, const BlendWeights& bw, const Mat<T>& colors,
                      const std::array<double, 3>& bg) {
  if (colors.cols() != 3) throw Error("composite: colors must be N x 3");
  Mat<T> img(static_cast<Eigen::Index>(fb.pixels()), 3);
  parallel_for(0, fb.pixels(), [&](std::size_t q) {
    double acc[3] = {bw.residual[q] * bg[0], bw.residual[q] * bg[1], bw.residual[q] * bg[2]};
    for (uint32_t f = fb.begin[q]; f < fb.begin[q + 1]; ++f) {
      const Eigen::Index p = fb.frags[f].point;
      if (p >= colors.rows()) throw Error("composite: fragment refers to a missing point");
      for (int c = 0; c < 3; ++c) acc[c] += bw.frag[f] * static_cast<double>(colors(p, c));
    }
    for (int c = 0; c < 3; ++c) img(static_cast<Eigen::Index>(q), c) = static_cast<T>(acc[c]);
  });
  return img;
}

template <typename T>
Mat<T> backward_with(const FragmentBuffer& fb, const BlendWeights& bw, const Mat<T>& g, Eigen::Index n_points) {
  if (g.rows() != static_cast<Eigen::Index>(fb.pixels()) || g.cols() != 3)
    throw Error("composite_backward: gradient does not match the image");
  Mat<T> d = Mat<T>::Zero(n_points, 3);
  // Pixel order is fixed, so the per-point sums are reproducible.
  for (std::size_t q = 0; q < fb.pixels(); ++q)
    for (uint32_t f = fb.begin[q]; f < fb.begin[q + 1]; ++f)
      d.row(fb.frags[f].point) += static_cast<T>(bw.frag[f]) * g.row(static_cast<Eigen::Index>(q));
  return d;
}

}  // namespace

template <typename T>
Mat<T> composite(const FragmentBuffer& fb, const Mat<T>& colors, const std::array<double, 3>& bg) {
  return composite_with(fb, blend_weights(fb), colors, bg);
}

template <typename T>
Var<T> composite(Tape<T>& tape, std::shared_ptr<const FragmentBuffer> fb, const Var<T>& colors,
                 const std::array<double, 3>& bg) {
  auto bw = std::make_shared<BlendWeights>(blend_weights(*fb));
  Mat<T> img = composite_with(*fb, *bw, colors->value, bg);
  return tape.apply(std::move(img), {colors}, [fb, bw, colors](const Mat<T>& g) {
    accumulate(colors, backward_with(*fb, *bw, g, colors->value.rows()));
  });
}

template <typename T>
Mat<T> composite_backward(const FragmentBuffer& fb, const Mat<T>& g, Eigen::Index n_points) {
  return backward_with(fb, blend_weights(fb), g, n_points);
}

MatF render(const MatD& positions, const MatF& colors, const Camera& cam, const RasterSettings& settings) {
  if (colors.rows() != positions.rows()) throw Error("render: color count does not match point count");
  return composite(rasterize(positions, cam, settings), colors, settings.background);
}

BoundingSphere bounding_sphere(const MatD& positions) {
  if (positions.rows() == 0) throw Error("bounding sphere of an empty cloud");
  BoundingSphere s;
  const Eigen::Vector3d lo = positions.colwise().minCoeff().transpose();
  const Eigen::Vector3d hi = positions.colwise().maxCoeff().transpose();
  s.center = (lo + hi) / 2.0;
  s.radius = (positions.rowwise() - s.center.transpose()).rowwise().norm().maxCoeff();
  return s;
}

double fit_distance(double sphere_radius, double fov, double fill) {
  const double half = fill * fov / 2.0;
  return std::max(sphere_radius, 1e-6) / std::sin(half);
}

Camera make_camera(const BoundingSphere& sphere, const ViewAngles& view, int width, int height, double fov_deg,
                   double distance) {
  Camera cam;
  cam.fov = deg2rad(fov_deg);
  cam.width = width;
  cam.height = height;
  cam.aspect = static_cast<double>(width) / height;
  const double d = distance > 0.0 ? distance : fit_distance(sphere.radius, cam.fov);
  const Pose pose = look_at(d, view.elevation, view.azimuth, sphere.center);
  cam.R = pose.R;
  cam.T = pose.T;
  cam.near = 0.1 * d;
  cam.far = 4.0 * d;
  cam.validate();
  return cam;
}

#define ROPC_INSTANTIATE(T)                                                                         \
  template Mat<T> composite<T>(const FragmentBuffer&, const Mat<T>&, const std::array<double, 3>&); \
  template Var<T> composite<T>(Tape<T>&, std::shared_ptr<const FragmentBuffer>, const Var<T>&,       \
                               const std::array<double, 3>&);                                       \
  template Mat<T> composite_backward<T>(const FragmentBuffer&, const Mat<T>&, Eigen::Index);
ROPC_INSTANTIATE(float)
ROPC_INSTANTIATE(double)
#undef ROPC_INSTANTIATE

}  // namespace ropc
