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

#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "ropc/renderer.hpp"

namespace ropc {
namespace {

constexpr double kPi = 3.14159265358979323846;

Camera spot_camera() {
  Camera c;
  c.fov = kPi / 2;
  c.near = 1;
  c.far = 3;
  c.aspect = 1;
  return c;
}

TEST(Project, SpotValue) {
  const NdcPoint p = project({1, 0, 2}, spot_camera());
  EXPECT_FALSE(p.culled);
  EXPECT_NEAR(p.x, 0.5, 1e-15);
  EXPECT_EQ(p.y, 0.0);
  EXPECT_EQ(p.z, 0.75);
}

TEST(Project, NearFarPlanesExact) {
  const Camera c = spot_camera();
  EXPECT_EQ(project({0, 0, c.near}, c).z, 0.0);
  EXPECT_EQ(project({0, 0, c.far}, c).z, 1.0);
  Camera odd = c;
  odd.near = 0.37;
  odd.far = 11.3;
  EXPECT_EQ(project({0, 0, odd.near}, odd).z, 0.0);
  EXPECT_EQ(project({0, 0, odd.far}, odd).z, 1.0);
}

TEST(Project, CullsBehindCamera) {
  EXPECT_TRUE(project({0, 0, 0}, spot_camera()).culled);
  EXPECT_TRUE(project({1, 1, -2}, spot_camera()).culled);
}

TEST(Project, Foreshortening) {
  const Camera c = spot_camera();
  EXPECT_NEAR(project({1, 0.5, 4}, c).x * 2, project({1, 0.5, 2}, c).x, 1e-15);
}

TEST(Viewport, Examples) {
  EXPECT_EQ(viewport(0, 0, 1024, 1024), Eigen::Vector2d(511.5, 511.5));
  EXPECT_EQ(viewport(0, 1, 1024, 1024).y(), -0.5);
  EXPECT_EQ(viewport(0, -1, 1024, 768).y(), 767.5);
  const Eigen::Vector2d c = pixel_center_ndc(7, 3, 16, 8);
  EXPECT_NEAR(viewport(c.x(), c.y(), 16, 8).x(), 7.0, 1e-12);
  EXPECT_NEAR(viewport(c.x(), c.y(), 16, 8).y(), 3.0, 1e-12);
}

TEST(LookAt, ConventionAndOrthonormality) {
  const Pose p = look_at(5.0, 0.0, 0.0);
  const Eigen::Vector3d o = p.T;  // R * 0 + T
  EXPECT_NEAR((o - Eigen::Vector3d(0, 0, 5)).norm(), 0.0, 1e-12);
  EXPECT_NEAR((p.R * Eigen::Vector3d::UnitX()).z(), 0.0, 1e-12);
  for (double e : {-90.0, -45.0, 0.0, 30.0, 90.0})
    for (double a : {0.0, 30.0, 135.0, 300.0}) {
      const Pose q = look_at(3.0, e, a);
      EXPECT_LT((q.R * q.R.transpose() - Eigen::Matrix3d::Identity()).norm(), 1e-6);
      const Eigen::Vector3d cam = camera_center(q);
      EXPECT_LT((q.R * cam + q.T).norm(), 1e-9);
      EXPECT_NEAR(cam.norm(), 3.0, 1e-9);
      EXPECT_NEAR((q.R * Eigen::Vector3d::Zero() + q.T - Eigen::Vector3d(0, 0, 3)).norm(), 0.0, 1e-9);
    }
}

FragmentBuffer single_fragment_buffer(double d, double r) {
  FragmentBuffer fb;
  fb.width = fb.height = 1;
  fb.radius = r;
  fb.begin = {0, 1};
  fb.frags = {{0, d, 0.5}};
  return fb;
}

TEST(Composite, SingleCenteredFragmentIsOpaque) {
  const auto fb = single_fragment_buffer(0.0, 0.1);
  MatD colors(1, 3);
  colors << 0.2, 0.4, 0.6;
  const MatD img = composite(fb, colors, {1, 1, 1});
  EXPECT_EQ(img, colors);
  MatD g(1, 3);
  g << 1, 2, 3;
  EXPECT_EQ(composite_backward(fb, g, 1), g);
}

TEST(Composite, TwoFragmentsHandValue) {
  FragmentBuffer fb;
  fb.width = fb.height = 1;
  fb.radius = 0.2;
  fb.begin = {0, 2};
  fb.frags = {{0, 0.1, 0.2}, {1, 0.0, 0.4}};
  MatD a(2, 3);
  a << 1, 0, 0.5, 0, 1, 0.25;
  const MatD img = composite(fb, a, {0, 0, 0});
  const Eigen::RowVector3d want = 0.75 * a.row(0) + 0.25 * a.row(1);
  EXPECT_LT((img.row(0) - want).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Composite, EmptyPixelIsBackground) {
  FragmentBuffer fb;
  fb.width = 2;
  fb.height = 1;
  fb.radius = 0.1;
  fb.begin = {0, 0, 0};
  const MatD img = composite(fb, MatD(MatD::Zero(3, 3)), {0.1, 0.2, 0.3});
  EXPECT_EQ(img.row(1), Eigen::RowVector3d(0.1, 0.2, 0.3));
  EXPECT_EQ(composite_backward(fb, MatD(MatD::Ones(2, 3)), 3), MatD::Zero(3, 3));
}

MatD random_points(int n, Rng& rng) {
  MatD p(n, 3);
  for (int i = 0; i < n; ++i) p.row(i) << rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1);
  return p;
}

TEST(Rasterize, MatchesAllPairsOracle) {
  for (uint64_t seed : {1, 2, 3, 4}) {
    Rng rng(seed);
    const MatD pts = random_points(100, rng);
    const BoundingSphere s{Eigen::Vector3d::Zero(), std::sqrt(3.0)};
    const Camera cam = make_camera(s, {rng.uniform(-60, 60), rng.uniform(0, 360)}, 40, 32);
    RasterSettings rs;
    rs.k = 4;
    rs.radius = 0.12;
    const FragmentBuffer fb = rasterize(pts, cam, rs);
    const auto want = oracle::rasterize(pts, cam, rs.radius, rs.k);
    ASSERT_EQ(fb.pixels(), want.size());
    for (std::size_t q = 0; q < want.size(); ++q) {
      ASSERT_EQ(fb.begin[q + 1] - fb.begin[q], want[q].size()) << "pixel " << q;
      for (std::size_t k = 0; k < want[q].size(); ++k) {
        const Fragment& f = fb.frags[fb.begin[q] + k];
        EXPECT_EQ(f.point, std::get<1>(want[q][k]));
        EXPECT_EQ(f.depth, std::get<0>(want[q][k]));
        EXPECT_NEAR(f.dist, std::get<2>(want[q][k]), 1e-12);
        EXPECT_LT(f.dist, rs.radius);
      }
    }
  }
}

TEST(Rasterize, PointOnPixelCenterAndBoundaryExclusion) {
  Camera cam = spot_camera();
  cam.width = cam.height = 8;
  RasterSettings rs;
  rs.k = 10;
  // Pixel (4, 4) center in NDC is (-0.125, -0.125); at z = 2 with tan = 1.
  MatD p(1, 3);
  p << -0.25, -0.25, 2.0;
  rs.radius = 0.25;
  FragmentBuffer fb = rasterize(p, cam, rs);
  const std::size_t q = 4 * 8 + 4;
  ASSERT_GE(fb.begin[q + 1] - fb.begin[q], 1u);
  EXPECT_NEAR(fb.frags[fb.begin[q]].dist, 0.0, 1e-12);
  // Pixel (6, 4) is exactly r = 0.5 away in x: excluded.
  rs.radius = 0.5;
  fb = rasterize(p, cam, rs);
  const std::size_t q2 = 4 * 8 + 6;
  EXPECT_EQ(fb.begin[q2 + 1] - fb.begin[q2], 0u);
}

TEST(Rasterize, KeepsClosestK) {
  Camera cam = spot_camera();
  cam.width = cam.height = 4;
  cam.far = 30;
  MatD p(6, 3);
  for (int i = 0; i < 6; ++i) p.row(i) << 0, 0, 2.0 + (5 - i) * 0.5;
  RasterSettings rs;
  rs.k = 3;
  rs.radius = 0.9;
  const FragmentBuffer fb = rasterize(p, cam, rs);
  const std::size_t q = 1 * 4 + 1;
  ASSERT_EQ(fb.begin[q + 1] - fb.begin[q], 3u);
  EXPECT_EQ(fb.frags[fb.begin[q]].point, 5);
  EXPECT_EQ(fb.frags[fb.begin[q] + 1].point, 4);
  EXPECT_EQ(fb.frags[fb.begin[q] + 2].point, 3);
}

TEST(Render, MatchesCompositingOracle) {
  Rng rng(7);
  const MatD pts = random_points(150, rng);
  MatF colors(150, 3);
  for (Eigen::Index i = 0; i < colors.size(); ++i) colors.data()[i] = static_cast<float>(rng.uniform());
  const Camera cam = make_camera(bounding_sphere(pts), {20, 40}, 24, 24);
  RasterSettings rs;
  rs.radius = 0.15;
  rs.k = 5;
  rs.background = {0.9, 0.5, 0.1};
  const MatF img = render(pts, colors, cam, rs);
  const auto frags = oracle::rasterize(pts, cam, rs.radius, rs.k);
  const Eigen::Vector3d bg(rs.background[0], rs.background[1], rs.background[2]);
  for (std::size_t q = 0; q < frags.size(); ++q) {
    std::vector<std::pair<double, Eigen::Vector3d>> list;
    for (const auto& [z, p, d] : frags[q]) list.emplace_back(d, colors.row(p).cast<double>().transpose());
    const Eigen::Vector3d want = oracle::composite_pixel(list, rs.radius, bg);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(img(static_cast<Eigen::Index>(q), c), want(c), 1e-6);
  }
}

TEST(Render, DeterministicAndOrderInvariant) {
  Rng rng(8);
  MatD pts = random_points(300, rng);
  // Duplicate depths so the row tie-break matters.
  pts.row(5) = pts.row(6);
  MatF colors(300, 3);
  for (Eigen::Index i = 0; i < colors.size(); ++i) colors.data()[i] = static_cast<float>(rng.uniform());
  colors.row(5).setConstant(0.5f);
  colors.row(6).setConstant(0.5f);
  const Camera cam = make_camera(bounding_sphere(pts), {0, 0}, 32, 32);
  const RasterSettings rs;
  const MatF a = render(pts, colors, cam, rs);
  EXPECT_EQ(a, render(pts, colors, cam, rs));
  const MatD rp = pts.colwise().reverse();
  const MatF rc = colors.colwise().reverse();
  EXPECT_EQ(a, render(rp, rc, cam, rs));
}

TEST(Composite, WeightsAndTransmittance) {
  Rng rng(9);
  const MatD pts = random_points(400, rng);
  const Camera cam = make_camera(bounding_sphere(pts), {10, 10}, 32, 32);
  const FragmentBuffer fb = rasterize(pts, cam, RasterSettings{});
  const BlendWeights bw = blend_weights(fb);
  for (std::size_t q = 0; q < fb.pixels(); ++q) {
    double trans = 1.0;
    for (uint32_t k = fb.begin[q]; k < fb.begin[q + 1]; ++k) {
      const double w = 1.0 - fb.frags[k].dist * fb.frags[k].dist / (fb.radius * fb.radius);
      EXPECT_GT(w, 0.0);
      EXPECT_LE(w, 1.0);
      EXPECT_NEAR(bw.frag[k], trans * w, 1e-12);
      const double next = trans * (1 - w);
      EXPECT_LE(next, trans);
      trans = next;
    }
    EXPECT_NEAR(bw.residual[q], trans, 1e-12);
  }
}

TEST(Composite, BackwardIsAdjoint) {
  Rng rng(10);
  const MatD pts = random_points(200, rng);
  const Camera cam = make_camera(bounding_sphere(pts), {0, 90}, 20, 20);
  const FragmentBuffer fb = rasterize(pts, cam, RasterSettings{});
  MatD a(200, 3), g(400, 3);
  for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = rng.normal();
  const MatD img0 = composite(fb, MatD(MatD::Zero(200, 3)), {0, 0, 0});
  const MatD img = composite(fb, a, {0, 0, 0});
  const double lhs = (img - img0).cwiseProduct(g).sum();
  const double rhs = composite_backward(fb, g, 200).cwiseProduct(a).sum();
  EXPECT_NEAR(lhs, rhs, 1e-10 * std::max(1.0, std::abs(lhs)));
}

TEST(Camera, FitAndDefaults) {
  const BoundingSphere s{Eigen::Vector3d(1, 2, 3), 2.0};
  const Camera c = make_camera(s, {0, 0}, 64, 32);
  const double d = fit_distance(2.0, c.fov);
  EXPECT_NEAR(c.near, 0.1 * d, 1e-12);
  EXPECT_NEAR(c.far, 4 * d, 1e-12);
  EXPECT_NEAR(c.aspect, 2.0, 1e-15);
  // The sphere spans 90% of the vertical field of view.
  EXPECT_NEAR(std::asin(2.0 / d), 0.9 * c.fov / 2, 1e-12);
  EXPECT_NEAR((c.R * s.center + c.T - Eigen::Vector3d(0, 0, d)).norm(), 0.0, 1e-9);
  RasterSettings rs;
  EXPECT_NEAR(rs.radius_for(c), 2.0 / 32 * 1.5, 1e-15);
}

}  // namespace
}  // namespace ropc
