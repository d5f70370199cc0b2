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

// Point splatting renderer.
//
// Points are moved to view space (X_view = R X + T, camera looking down +z),
// projected to NDC, and splatted as discs of radius r (NDC units). Each pixel
// keeps its K closest fragments, which are blended front to back:
//
//   w_i = 1 - d_i^2 / r^2
//   C   = sum_i w_i prod_{j<i} (1 - w_j) A_i + prod_i (1 - w_i) background
//
// Geometry is fixed, so the image is linear in the point colors and the
// backward pass only reaches the colors.

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "ropc/diff.hpp"

namespace ropc {

struct Camera {
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d T = Eigen::Vector3d::Zero();
  double fov = 60.0 * 3.14159265358979323846 / 180.0;  // vertical, radians
  double near = 0.1;
  double far = 100.0;
  double aspect = 1.0;  // width / height
  int width = 384;
  int height = 384;

  void validate() const;
};

struct RasterSettings {
  double radius = 0.0;  // NDC units; <= 0 selects 2 / min(width, height) * 1.5
  int k = 10;
  std::array<double, 3> background = {1.0, 1.0, 1.0};

  double radius_for(const Camera& cam) const;
};

// Rotation and translation of a camera on a sphere of the given radius
// around `target`, looking at it. Angles in degrees; azimuth turns about +Y
// starting from +Z, elevation lifts toward +Y.
struct Pose {
  Eigen::Matrix3d R;
  Eigen::Vector3d T;
};
Pose look_at(double distance, double elevation_deg, double azimuth_deg,
             const Eigen::Vector3d& target = Eigen::Vector3d::Zero());

Eigen::Vector3d camera_center(const Pose& pose);

struct NdcPoint {
  double x = 0, y = 0, z = 0;
  bool culled = false;
};

NdcPoint project(const Eigen::Vector3d& view, const Camera& cam);

// Pixel-space position; pixel (i, j) has its center at (i, j).
Eigen::Vector2d viewport(double x_ndc, double y_ndc, int width, int height);

// NDC position of the center of pixel column i, row j.
Eigen::Vector2d pixel_center_ndc(int i, int j, int width, int height);

struct Fragment {
  int32_t point = 0;
  double dist = 0;   // NDC distance from the splat center to the pixel center
  double depth = 0;  // NDC z
};

struct FragmentBuffer {
  int width = 0;
  int height = 0;
  double radius = 0;
  std::vector<uint32_t> begin;  // width * height + 1 offsets into `frags`
  std::vector<Fragment> frags;  // per pixel, closest first

  std::size_t pixels() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

// positions: N x 3 world coordinates.
FragmentBuffer rasterize(const MatD& positions, const Camera& cam, const RasterSettings& settings);

// Compositing weight of each fragment, w_i prod_{j<i} (1 - w_j), in buffer
// order, plus the residual transmittance of every pixel.
struct BlendWeights {
  std::vector<double> frag;
  std::vector<double> residual;
};
BlendWeights blend_weights(const FragmentBuffer& frags);

// Image as (height * width) x 3, row-major over pixels (row j, column i at
// j * width + i).
template <typename T>
Var<T> composite(Tape<T>& tape, std::shared_ptr<const FragmentBuffer> frags, const Var<T>& colors,
                 const std::array<double, 3>& background);

template <typename T>
Mat<T> composite(const FragmentBuffer& frags, const Mat<T>& colors, const std::array<double, 3>& background);

// d(loss)/d(colors) for a given d(loss)/d(image).
template <typename T>
Mat<T> composite_backward(const FragmentBuffer& frags, const Mat<T>& grad_image, Eigen::Index n_points);

MatF render(const MatD& positions, const MatF& colors, const Camera& cam, const RasterSettings& settings);

// Camera placement from a cloud's bounds.
struct ViewAngles {
  double elevation = 0;  // degrees
  double azimuth = 0;
};

struct BoundingSphere {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0;
};
BoundingSphere bounding_sphere(const MatD& positions);

// Distance at which the sphere spans `fill` of the vertical field of view.
double fit_distance(double sphere_radius, double fov, double fill = 0.9);

// Default camera looking at the sphere center: near = 0.1 d, far = 4 d.
Camera make_camera(const BoundingSphere& sphere, const ViewAngles& view, int width, int height,
                   double fov_deg = 60.0, double distance = 0.0);

}  // namespace ropc
