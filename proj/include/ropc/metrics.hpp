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

// Image quality metrics and rate-distortion curve comparison.
//
// Images are (height * width) x 3 matrices of RGB in [0, 1], pixel rows in
// raster order, as produced by the renderer.

#pragma once

#include <array>
#include <utility>
#include <vector>

#include "ropc/diff.hpp"

namespace ropc {

inline constexpr double kPsnrCap = 99.0;

enum class PsnrChannel { kY, kU, kV, kRgb };

// BT.709 full range: Y = .2126 R + .7152 G + .0722 B, U = (B - Y) / 1.8556,
// V = (R - Y) / 1.5748.
MatD rgb_to_yuv(const MatD& rgb);

// 10 log10(1 / mse), 99 when the images match.
double psnr_from_mse(double mse);
double psnr(const MatD& ref, const MatD& test, PsnrChannel channel);

// (6 Y + U + V) / 8 over per-channel PSNR values.
double yuv611(double psnr_y, double psnr_u, double psnr_v);
double psnr_yuv611(const MatD& ref, const MatD& test);

struct MsSsimOptions {
  int scales = 5;
  int window = 11;
  double sigma = 1.5;
  std::array<double, 5> weights = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  double k1 = 0.01;
  double k2 = 0.03;
};

// Number of scales usable for an image whose smaller side is `min_dim`.
int ms_ssim_scales(int min_dim, const MsSsimOptions& opt = {});

// Mean over the three channels of the single-channel MS-SSIM.
double ms_ssim(const MatD& ref, const MatD& test, int width, int height, const MsSsimOptions& opt = {});

// MS-SSIM and its gradient with respect to `test`.
std::pair<double, MatD> ms_ssim_with_grad(const MatD& ref, const MatD& test, int width, int height,
                                          const MsSsimOptions& opt = {});

// 1 - MS-SSIM(ref, test) as a 1x1 result; differentiable in `test`.
template <typename T>
Var<T> ms_ssim_loss(Tape<T>& tape, const Mat<T>& ref, const Var<T>& test, int width, int height,
                    const MsSsimOptions& opt = {});

struct RdPoint {
  double rate = 0;     // bpp
  double quality = 0;  // dB
};

// Average rate difference of `test` relative to `anchor` in percent at equal
// quality. Cubic fit of ln(rate) over quality, integrated on the overlap.
double bd_rate(const std::vector<RdPoint>& anchor, const std::vector<RdPoint>& test);

// Least-squares polynomial coefficients, lowest order first.
std::vector<double> polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree);

}  // namespace ropc
