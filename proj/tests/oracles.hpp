// Copyright 2026 The ropc Author
//
// Licened under the Apache License, Version 2.0 (the "License");
// you may not ue this file except in compliance with the License.
// You may obtain a copy of the Licene at
//
//     http://www.apache.org/licenes/LICENSE-2.0
//
// Unles required by applicable law or agreed to in writing, software
// ditributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either expres or implied.
// See the Licene for the specific language governing permissions and
// limitation under the License.

// Slow reference implementation written directly from the definitions.
// They hare no code with the library beyond plain data types.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>
#include <vector>

#include <Eigen/Dense>

#include "ropc/diff.hpp"
#include "ropc/metrics.hpp"
#include "ropc/renderer.hpp"
#include "ropc/sparse_tensor.hpp"

namespace ropc::oracle {

// Rows j with max_k |c_j - c_i| <= stride * h, by scanning every point.
inline std::vector<std::pair<int32_t, Coord>> neighbors(const std::vector<Coord>& sorted, std::size_t i,
                                                        int window, int32_t stride) {
  const int32_t reach = stride * (window - 1) / 2;
  std::vector<std::pair<int32_t, Coord>> out;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    bool in = true;
    for (int k = 0; k < 3; ++k) in = in && std::abs(sorted[j][k] - sorted[i][k]) <= reach;
    if (in)
      out.push_back({static_cast<int32_t>(j),
                     Coord{sorted[i][0] - sorted[j][0], sorted[i][1] - sorted[j][1], sorted[i][2] - sorted[j][2]}});
  }
  return out;
}

// Dense 3D convolution on a g^3 grid with zero padding, evaluated at the
// occupied sites. weight holds K^3 blocks of c_in x c_out, offsets ordered
// x slowest, z fastest; out(c) = b + sum_m x(c + m) W_m.
inline MatD dense_conv(const std::vector<Coord>& sites, const MatD& feats, const MatD& weight, const MatD& bias,
                       int grid, int kernel) {
  const Eigen::Index cin = feats.cols(), cout = weight.cols();
  std::vector<MatD> dense(static_cast<std::size_t>(grid * grid * grid), MatD::Zero(1, cin));
  auto at = [&](int x, int y, int z) -> MatD& { return dense[static_cast<std::size_t>((x * grid + y) * grid + z)]; };
  for (std::size_t i = 0; i < sites.size(); ++i) at(sites[i][0], sites[i][1], sites[i][2]) = feats.row(static_cast<Eigen::Index>(i));
  const int h = kernel / 2;
  MatD out(static_cast<Eigen::Index>(sites.size()), cout);
  for (std::size_t i = 0; i < sites.size(); ++i) {
    Eigen::RowVectorXd acc = bias.row(0);
    int m = 0;
    for (int dx = -h; dx <= h; ++dx)
      for (int dy = -h; dy <= h; ++dy)
        for (int dz = -h; dz <= h; ++dz, ++m) {
          const int x = sites[i][0] + dx, y = sites[i][1] + dy, z = sites[i][2] + dz;
          if (x < 0 || y < 0 || z < 0 || x >= grid || y >= grid || z >= grid) continue;
          acc += at(x, y, z) * weight.middleRows(static_cast<Eigen::Index>(m) * cin, cin);
        }
    out.row(static_cast<Eigen::Index>(i)) = acc;
  }
  return out;
}

// Two-layer perceptron, one row at a time.
inline Eigen::RowVectorXd mlp(const ParamStore<double>& ps, const std::string& name, const Eigen::RowVectorXd& x) {
  Eigen::RowVectorXd h = x * ps.get(name + ".0.weight")->value + ps.get(name + ".0.bias")->value;
  for (Eigen::Index k = 0; k < h.size(); ++k) h(k) = std::max(h(k), 0.0);
  return h * ps.get(name + ".1.weight")->value + ps.get(name + ".1.bias")->value;
}

// f_i + sum_{j in window} cos(theta(f_i), alpha(f_j) + delta(c_i - c_j)) lambda(f_j).
inline MatD attention_block(const ParamStore<double>& ps, const std::string& name, const std::vector<Coord>& sorted,
                            const MatD& f, int window, int32_t stride) {
  MatD out = f;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const Eigen::RowVectorXd q = mlp(ps, name + ".theta", f.row(static_cast<Eigen::Index>(i)));
    for (const auto& [j, off] : neighbors(sorted, i, window, stride)) {
      const Eigen::RowVector3d d(off[0], off[1], off[2]);
      const Eigen::RowVectorXd k = mlp(ps, name + ".alpha", f.row(j)) + mlp(ps, name + ".delta", d);
      const double nq = q.norm(), nk = k.norm();
      const double w = (nq < 1e-12 || nk < 1e-12) ? 0.0 : q.dot(k) / (nq * nk);
      out.row(static_cast<Eigen::Index>(i)) += w * mlp(ps, name + ".lambda", f.row(j));
    }
  }
  return out;
}

// Every (pixel, point) pair tested directly. Returns per pixel the sorted
// list of (depth, point, dist) kept under the K closest rule.
using PixelFrags = std::vector<std::vector<std::tuple<double, int32_t, double>>>;

inline PixelFrags rasterize(const MatD& positions, const Camera& cam, double r, int k) {
  const int W = cam.width, H = cam.height;
  const double t = std::tan(cam.fov / 2.0);
  PixelFrags px(static_cast<std::size_t>(W * H));
  for (int j = 0; j < H; ++j)
    for (int i = 0; i < W; ++i) {
      // Pixel center mapped back to NDC: u = (1 - x) W / 2 - 1/2.
      const double cx = 1.0 - (2.0 * i + 1.0) / W, cy = 1.0 - (2.0 * j + 1.0) / H;
      auto& list = px[static_cast<std::size_t>(j * W + i)];
      for (Eigen::Index p = 0; p < positions.rows(); ++p) {
        const Eigen::Vector3d v = cam.R * positions.row(p).transpose() + cam.T;
        if (v.z() <= 1e-9) continue;
        const double x = v.x() / (v.z() * t * cam.aspect), y = v.y() / (v.z() * t);
        const double z = cam.far * (v.z() - cam.near) / (v.z() * (cam.far - cam.near));
        const double d = std::sqrt((cx - x) * (cx - x) + (cy - y) * (cy - y));
        if (d < r) list.emplace_back(z, static_cast<int32_t>(p), d);
      }
      std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
        return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b) : std::get<1>(a) < std::get<1>(b);
      });
      if (list.size() > static_cast<std::size_t>(k)) list.resize(static_cast<std::size_t>(k));
    }
  return px;
}

// Front-to-back over-compositing with a background term.
inline Eigen::Vector3d composite_pixel(const std::vector<std::pair<double, Eigen::Vector3d>>& frags, double r,
                                       const Eigen::Vector3d& background) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  double trans = 1.0;
  for (const auto& [d, a] : frags) {
    const double w = 1.0 - d * d / (r * r);
    c += trans * w * a;
    trans *= 1.0 - w;
  }
  return c + trans * background;
}

// Single-channel MS-SSIM with an explicit 2D Gaussian window.
inline double ms_ssim_channel(std::vector<std::vector<double>> x, std::vector<std::vector<double>> y) {
  const double weights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  const int n = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  std::vector<std::vector<double>> win(n, std::vector<double>(n));
  double tot = 0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) tot += (win[a][b] = std::exp(-((a - 5.0) * (a - 5.0) + (b - 5.0) * (b - 5.0)) / (2 * sigma * sigma)));
  for (auto& row : win)
    for (double& v : row) v /= tot;
  int scales = 5;
  const int min_dim = static_cast<int>(std::min(x.size(), x[0].size()));
  while (scales > 1 && min_dim < n * (1 << (scales - 1))) --scales;
  double wsum = 0;
  for (int s = 0; s < scales; ++s) wsum += weights[s];
  double score = 1.0;
  for (int s = 0; s < scales; ++s) {
    const int H = static_cast<int>(x.size()), W = static_cast<int>(x[0].size());
    double acc = 0;
    int count = 0;
    for (int i = 0; i + n <= H; ++i)
      for (int j = 0; j + n <= W; ++j) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int a = 0; a < n; ++a)
          for (int b = 0; b < n; ++b) {
            const double g = win[a][b], u = x[i + a][j + b], v = y[i + a][j + b];
            mx += g * u;
            my += g * v;
            xx += g * u * u;
            yy += g * v * v;
            xy += g * u * v;
          }
        const double vx = xx - mx * mx, vy = yy - my * my, cxy = xy - mx * my;
        double term = (2 * cxy + c2) / (vx + vy + c2);
        if (s == scales - 1) term *= (2 * mx * my + c1) / (mx * mx + my * my + c1);
        acc += term;
        ++count;
      }
    score *= std::pow(std::max(acc / count, 0.0), weights[s] / wsum);
    auto down = [](const std::vector<std::vector<double>>& m) {
      std::vector<std::vector<double>> o(m.size() / 2, std::vector<double>(m[0].size() / 2));
      for (std::size_t i = 0; i < o.size(); ++i)
        for (std::size_t j = 0; j < o[0].size(); ++j)
          o[i][j] = (m[2 * i][2 * j] + m[2 * i + 1][2 * j] + m[2 * i][2 * j + 1] + m[2 * i + 1][2 * j + 1]) / 4;
      return o;
    };
    if (s + 1 < scales) {
      x = down(x);
      y = down(y);
    }
  }
  return score;
}

inline double ms_ssim(const MatD& ref, const MatD& test, int width, int height) {
  double total = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<std::vector<double>> x(static_cast<std::size_t>(height), std::vector<double>(static_cast<std::size_t>(width)));
    auto y = x;
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j) {
        x[i][j] = ref(i * width + j, c);
        y[i][j] = test(i * width + j, c);
      }
    total += ms_ssim_channel(x, y);
  }
  return total / 3;
}

// Average log-rate gap using a cubic fit solved by QR and a 2000-panel
// trapezoid rule instead of the closed-form integral.
inline double bd_rate(const std::vector<RdPoint>& anchor, const std::vector<RdPoint>& test) {
  auto fit = [](const std::vector<RdPoint>& pts) {
    Eigen::MatrixXd A(static_cast<Eigen::Index>(pts.size()), 4);
    Eigen::VectorXd b(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (int k = 0; k < 4; ++k) A(static_cast<Eigen::Index>(i), k) = std::pow(pts[i].quality, k);
      b(static_cast<Eigen::Index>(i)) = std::log(pts[i].rate);
    }
    return Eigen::VectorXd(A.colPivHouseholderQr().solve(b));
  };
  auto range = [](const std::vector<RdPoint>& pts) {
    double lo = pts[0].quality, hi = lo;
    for (const auto& p : pts) {
      lo = std::min(lo, p.quality);
      hi = std::max(hi, p.quality);
    }
    return std::pair{lo, hi};
  };
  const auto pa = fit(anchor), pt = fit(test);
  const auto [la, ha] = range(anchor);
  const auto [lt, ht] = range(test);
  const double lo = std::max(la, lt), hi = std::min(ha, ht);
  auto eval = [](const Eigen::VectorXd& p, double q) { return p(0) + q * (p(1) + q * (p(2) + q * p(3))); };
  const int panels = 2000;
  double acc = 0;
  for (int i = 0; i <= panels; ++i) {
    const double q = lo + (hi - lo) * i / panels;
    const double v = eval(pt, q) - eval(pa, q);
    acc += (i == 0 || i == panels) ? v / 2 : v;
  }
  return (std::exp(acc / panels) - 1.0) * 100.0;
}

}  // namespace ropc::oracle
