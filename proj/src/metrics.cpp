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

#include "ropc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

namespace ropc {

MatD rgb_to_yuv(const MatD& rgb) {
  if (rgb.cols() != 3) throw Error("rgb_to_yuv: expected 3 columns");
  MatD out(rgb.rows(), 3);
  for (Eigen::Index i = 0; i < rgb.rows(); ++i) {
    const double r = rgb(i, 0), g = rgb(i, 1), b = rgb(i, 2);
    const double y = 0.2126 * r + 0.7152 * g + 0.0722 * b;
    out(i, 0) = y;
    out(i, 1) = (b - y) / 1.8556;
    out(i, 2) = (r - y) / 1.5748;
  }
  return out;
}

double psnr_from_mse(double mse) {
  if (mse <= 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double psnr(const MatD& ref, const MatD& test, PsnrChannel channel) {
  if (ref.rows() != test.rows() || ref.cols() != test.cols()) throw Error("psnr: image sizes differ");
  if (ref.size() == 0) throw Error("psnr: empty image");
  if (channel == PsnrChannel::kRgb) return psnr_from_mse((ref - test).squaredNorm() / static_cast<double>(ref.size()));
  const int c = channel == PsnrChannel::kY ? 0 : channel == PsnrChannel::kU ? 1 : 2;
  const MatD a = rgb_to_yuv(ref), b = rgb_to_yuv(test);
  return psnr_from_mse((a.col(c) - b.col(c)).squaredNorm() / static_cast<double>(a.rows()));
}

double yuv611(double y, double u, double v) { return (6.0 * y + u + v) / 8.0; }

double psnr_yuv611(const MatD& ref, const MatD& test) {
  return yuv611(psnr(ref, test, PsnrChannel::kY), psnr(ref, test, PsnrChannel::kU),
                psnr(ref, test, PsnrChannel::kV));
}

// ---------------------------------------------------------------------------
// MS-SSIM

namespace {

using Plane = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> gaussian_taps(int n, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(n));
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = i - (n - 1) / 2.0;
    total += (g[static_cast<std::size_t>(i)] = std::exp(-x * x / (2.0 * sigma * sigma)));
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable valid convolution.
Plane filter_valid(const Plane& in, const std::vector<double>& g) {
  const Eigen::Index n = static_cast<Eigen::Index>(g.size());
  const Eigen::Index H = in.rows() - n + 1, W = in.cols() - n + 1;
  Plane tmp = Plane::Zero(in.rows(), W);
  for (Eigen::Index k = 0; k < n; ++k) tmp += g[static_cast<std::size_t>(k)] * in.middleCols(k, W);
  Plane out = Plane::Zero(H, W);
  for (Eigen::Index k = 0; k < n; ++k) out += g[static_cast<std::size_t>(k)] * tmp.middleRows(k, H);
  return out;
}

// Adjoint of filter_valid: spreads a valid-size map back to the input size.
Plane filter_valid_adjoint(const Plane& d, const std::vector<double>& g, Eigen::Index rows, Eigen::Index cols) {
  const Eigen::Index n = static_cast<Eigen::Index>(g.size());
  const Eigen::Index H = d.rows(), W = d.cols();
  Plane tmp = Plane::Zero(rows, W);
  for (Eigen::Index k = 0; k < n; ++k) tmp.middleRows(k, H) += g[static_cast<std::size_t>(k)] * d;
  Plane out = Plane::Zero(rows, cols);
  for (Eigen::Index k = 0; k < n; ++k) out.middleCols(k, W) += g[static_cast<std::size_t>(k)] * tmp;
  return out;
}

// 2x2 average pooling; an odd trailing row or column is dropped.
Plane pool(const Plane& in) {
  const Eigen::Index H = in.rows() / 2, W = in.cols() / 2;
  Plane out(H, W);
  for (Eigen::Index i = 0; i < H; ++i)
    for (Eigen::Index j = 0; j < W; ++j)
      out(i, j) = 0.25 * (in(2 * i, 2 * j) + in(2 * i + 1, 2 * j) + in(2 * i, 2 * j + 1) + in(2 * i + 1, 2 * j + 1));
  return out;
}

Plane pool_adjoint(const Plane& d, Eigen::Index rows, Eigen::Index cols) {
  Plane out = Plane::Zero(rows, cols);
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      const double v = 0.25 * d(i, j);
      out(2 * i, 2 * j) += v;
      out(2 * i + 1, 2 * j) += v;
      out(2 * i, 2 * j + 1) += v;
      out(2 * i + 1, 2 * j + 1) += v;
    }
  return out;
}

struct ScaleStats {
  Plane mx, my, sxx, syy, sxy;
};

ScaleStats stats(const Plane& x, const Plane& y, const std::vector<double>& g) {
  ScaleStats s;
  s.mx = filter_valid(x, g);
  s.my = filter_valid(y, g);
  s.sxx = filter_valid(x.cwiseProduct(x), g) - s.mx.cwiseProduct(s.mx);
  s.syy = filter_valid(y.cwiseProduct(y), g) - s.my.cwiseProduct(s.my);
  s.sxy = filter_valid(x.cwiseProduct(y), g) - s.mx.cwiseProduct(s.my);
  return s;
}

// MS-SSIM of one channel; fills dy with the gradient when requested.
double channel_ms_ssim(const Plane& x0, const Plane& y0, const MsSsimOptions& opt, int scales, Plane* dy) {
  const auto g = gaussian_taps(opt.window, opt.sigma);
  const double c1 = opt.k1 * opt.k1, c2 = opt.k2 * opt.k2;
  std::vector<double> w(opt.weights.begin(), opt.weights.begin() + scales);
  double wsum = 0.0;
  for (double v : w) wsum += v;
  for (double& v : w) v /= wsum;

  std::vector<Plane> xs{x0}, ys{y0};
  for (int s = 1; s < scales; ++s) {
    xs.push_back(pool(xs.back()));
    ys.push_back(pool(ys.back()));
  }
  std::vector<ScaleStats> st(static_cast<std::size_t>(scales));
  std::vector<double> value(static_cast<std::size_t>(scales));
  for (int s = 0; s < scales; ++s) {
    auto& t = st[static_cast<std::size_t>(s)] = stats(xs[static_cast<std::size_t>(s)], ys[static_cast<std::size_t>(s)], g);
    const Plane cs = (2.0 * t.sxy.array() + c2) / (t.sxx.array() + t.syy.array() + c2);
    if (s + 1 < scales) {
      value[static_cast<std::size_t>(s)] = cs.mean();
    } else {
      const Plane l = (2.0 * t.mx.array() * t.my.array() + c1) /
                      (t.mx.array().square() + t.my.array().square() + c1);
      value[static_cast<std::size_t>(s)] = l.cwiseProduct(cs).mean();
    }
  }
  double score = 1.0;
  for (int s = 0; s < scales; ++s) score *= std::pow(std::max(value[static_cast<std::size_t>(s)], 0.0), w[static_cast<std::size_t>(s)]);
  if (!dy) return score;

  // Backward, coarsest scale first so pooled gradients flow to finer ones.
  Plane carry;
  for (int s = scales - 1; s >= 0; --s) {
    const auto& t = st[static_cast<std::size_t>(s)];
    const Plane& x = xs[static_cast<std::size_t>(s)];
    const Plane& y = ys[static_cast<std::size_t>(s)];
    const double v = value[static_cast<std::size_t>(s)];
    Plane grad_y = Plane::Zero(y.rows(), y.cols());
    if (v > 0.0 && score > 0.0) {
      const double coef = score * w[static_cast<std::size_t>(s)] / v / static_cast<double>(t.mx.size());
      const auto A = (2.0 * t.sxy.array() + c2);
      const auto B = (t.sxx.array() + t.syy.array() + c2);
      Plane g_cs = Plane::Constant(t.mx.rows(), t.mx.cols(), coef);
      Plane g_my = Plane::Zero(t.mx.rows(), t.mx.cols());
      if (s + 1 == scales) {
        const Plane L1 = 2.0 * t.mx.array() * t.my.array() + c1;
        const Plane L2 = t.mx.array().square() + t.my.array().square() + c1;
        const Plane l = L1.array() / L2.array();
        const Plane cs = A / B;
        // d(l cs) = cs dl + l dcs
        const Plane dl_dmy = (2.0 * t.mx.array() * L2.array() - 2.0 * t.my.array() * L1.array()) / L2.array().square();
        g_my = coef * cs.array() * dl_dmy.array();
        g_cs = coef * l.array();
      }
      const Plane g_xy = 2.0 * g_cs.array() / B;                       // d/d filter(xy)
      const Plane g_yy = -g_cs.array() * A / B.square();               // d/d filter(yy)
      g_my.array() += g_cs.array() * (-2.0 * t.mx.array() / B + 2.0 * t.my.array() * A / B.square());
      grad_y = filter_valid_adjoint(g_my, g, y.rows(), y.cols()) +
               x.cwiseProduct(filter_valid_adjoint(g_xy, g, y.rows(), y.cols())) +
               2.0 * y.cwiseProduct(filter_valid_adjoint(g_yy, g, y.rows(), y.cols()));
    }
    if (s + 1 < scales) grad_y += pool_adjoint(carry, y.rows(), y.cols());
    carry = std::move(grad_y);
  }
  *dy = std::move(carry);
  return score;
}

Plane channel_plane(const MatD& img, int c, int width, int height) {
  Plane p(height, width);
  for (int j = 0; j < height; ++j)
    for (int i = 0; i < width; ++i) p(j, i) = img(static_cast<Eigen::Index>(j) * width + i, c);
  return p;
}

void check_image(const MatD& img, int width, int height, const char* what) {
  if (width <= 0 || height <= 0 || img.rows() != static_cast<Eigen::Index>(width) * height || img.cols() != 3)
    throw Error(std::string("ms_ssim: ") + what + " does not match " + std::to_string(width) + "x" +
                std::to_string(height) + "x3");
}

}  // namespace

int ms_ssim_scales(int min_dim, const MsSsimOptions& opt) {
  for (int m = std::min(opt.scales, 5); m >= 1; --m)
    if (min_dim >= opt.window * (1 << (m - 1))) return m;
  throw Error("ms_ssim: image smaller than the " + std::to_string(opt.window) + "-pixel window");
}

std::pair<double, MatD> ms_ssim_with_grad(const MatD& ref, const MatD& test, int width, int height,
                                          const MsSsimOptions& opt) {
  check_image(ref, width, height, "reference");
  check_image(test, width, height, "test image");
  const int scales = ms_ssim_scales(std::min(width, height), opt);
  MatD grad(test.rows(), 3);
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    Plane d;
    total += channel_ms_ssim(channel_plane(ref, c, width, height), channel_plane(test, c, width, height), opt, scales, &d);
    for (int j = 0; j < height; ++j)
      for (int i = 0; i < width; ++i) grad(static_cast<Eigen::Index>(j) * width + i, c) = d(j, i) / 3.0;
  }
  return {total / 3.0, grad};
}

double ms_ssim(const MatD& ref, const MatD& test, int width, int height, const MsSsimOptions& opt) {
  check_image(ref, width, height, "reference");
  check_image(test, width, height, "test image");
  const int scales = ms_ssim_scales(std::min(width, height), opt);
  double total = 0.0;
  for (int c = 0; c < 3; ++c)
    total += channel_ms_ssim(channel_plane(ref, c, width, height), channel_plane(test, c, width, height), opt, scales,
                             nullptr);
  return total / 3.0;
}

template <typename T>
Var<T> ms_ssim_loss(Tape<T>& tape, const Mat<T>& ref, const Var<T>& test, int width, int height,
                    const MsSsimOptions& opt) {
  auto [score, grad] = ms_ssim_with_grad(ref.template cast<double>(), test->value.template cast<double>(), width,
                                         height, opt);
  Mat<T> out(1, 1);
  out(0, 0) = static_cast<T>(1.0 - score);
  auto g = std::make_shared<Mat<T>>(grad.template cast<T>());
  return tape.apply(std::move(out), {test}, [test, g](const Mat<T>& up) { accumulate(test, (*g) * (-up(0, 0))); });
}

// ---------------------------------------------------------------------------
// BD-rate

std::vector<double> polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree) {
  if (x.size() != y.size()) throw Error("polyfit: size mismatch");
  if (static_cast<int>(x.size()) <= degree) throw Error("polyfit: not enough points");
  // Center and scale x for conditioning, then expand back.
  double lo = *std::min_element(x.begin(), x.end()), hi = *std::max_element(x.begin(), x.end());
  const double mid = (lo + hi) / 2.0, half = std::max((hi - lo) / 2.0, 1e-12);
  Eigen::MatrixXd A(static_cast<Eigen::Index>(x.size()), degree + 1);
  Eigen::VectorXd b(static_cast<Eigen::Index>(x.size()));
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = (x[i] - mid) / half;
    double p = 1.0;
    for (int k = 0; k <= degree; ++k, p *= t) A(static_cast<Eigen::Index>(i), k) = p;
    b(static_cast<Eigen::Index>(i)) = y[i];
  }
  const Eigen::VectorXd c = A.colPivHouseholderQr().solve(b);
  // sum_k c_k ((x - mid) / half)^k expanded in powers of x.
  std::vector<double> out(static_cast<std::size_t>(degree + 1), 0.0);
  for (int k = 0; k <= degree; ++k) {
    // binomial expansion of (x - mid)^k / half^k
    double binom = 1.0;
    for (int j = 0; j <= k; ++j) {
      out[static_cast<std::size_t>(j)] += c(k) * binom * std::pow(-mid, k - j) / std::pow(half, k);
      binom = binom * (k - j) / (j + 1);
    }
  }
  return out;
}

namespace {

double poly_integral(const std::vector<double>& c, double a, double b) {
  double total = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double e = static_cast<double>(k + 1);
    total += c[k] * (std::pow(b, e) - std::pow(a, e)) / e;
  }
  return total;
}

void split_curve(const std::vector<RdPoint>& curve, std::vector<double>& q, std::vector<double>& lr) {
  if (curve.size() < 4) throw Error("bd_rate: each curve needs at least 4 points");
  for (const auto& p : curve) {
    if (!(p.rate > 0.0)) throw Error("bd_rate: rates must be positive");
    q.push_back(p.quality);
    lr.push_back(std::log(p.rate));
  }
}

}  // namespace

double bd_rate(const std::vector<RdPoint>& anchor, const std::vector<RdPoint>& test) {
  std::vector<double> qa, ra, qt, rt;
  split_curve(anchor, qa, ra);
  split_curve(test, qt, rt);
  const double lo = std::max(*std::min_element(qa.begin(), qa.end()), *std::min_element(qt.begin(), qt.end()));
  const double hi = std::min(*std::max_element(qa.begin(), qa.end()), *std::max_element(qt.begin(), qt.end()));
  if (!(hi > lo)) throw Error("bd_rate: quality ranges do not overlap");
  const auto pa = polyfit(qa, ra, 3);
  const auto pt = polyfit(qt, rt, 3);
  const double diff = (poly_integral(pt, lo, hi) - poly_integral(pa, lo, hi)) / (hi - lo);
  return (std::exp(diff) - 1.0) * 100.0;
}

template Var<float> ms_ssim_loss<float>(Tape<float>&, const Mat<float>&, const Var<float>&, int, int,
                                        const MsSsimOptions&);
template Var<double> ms_ssim_loss<double>(Tape<double>&, const Mat<double>&, const Var<double>&, int, int,
                                          const MsSsimOptions&);

}  // namespace ropc
