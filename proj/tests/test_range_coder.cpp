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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ropc/range_coder.hpp"
#include "support.hpp"

namespace ropc {
namespace {

TEST(QuantizeCounts, Examples) {
  EXPECT_EQ(quantize_counts(std::vector<double>{0.5, 0.5}), (std::vector<uint32_t>{kCdfTotal / 2, kCdfTotal / 2}));
  EXPECT_EQ(quantize_counts(std::vector<double>{1e-12, 1.0}), (std::vector<uint32_t>{1, kCdfTotal - 1}));
  // 2^31 - 3 spare counts split three ways leave two to hand out.
  EXPECT_EQ(quantize_counts(std::vector<double>{1.0, 1.0, 1.0}),
            (std::vector<uint32_t>{715827883, 715827883, 715827882}));
}

TEST(QuantizeCounts, Errors) {
  EXPECT_THROW(quantize_counts(std::vector<double>{}), Error);
  EXPECT_THROW(quantize_counts(std::vector<double>{1.0, -1.0}), Error);
  EXPECT_THROW(quantize_counts(std::vector<double>{1.0, std::nan("")}), Error);
  EXPECT_THROW(quantize_counts(std::vector<double>((1u << 15) + 1, 1.0)), Error);
}

TEST(QuantizeCounts, SumAndOrderProperty) {
  Rng rng(21);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> m(1 + rng.below(500));
    for (double& v : m) v = std::exp(-15.0 * rng.uniform());
    const auto c = quantize_counts(m);
    EXPECT_EQ(std::accumulate(c.begin(), c.end(), uint64_t{0}), uint64_t{kCdfTotal});
    for (std::size_t i = 0; i < m.size(); ++i) {
      EXPECT_GE(c[i], 1u);
      for (std::size_t j = i + 1; j < m.size() && j < i + 20; ++j)
        if (m[i] > m[j]) EXPECT_GE(c[i], c[j]);
    }
  }
}

TEST(CdfTable, ValidateRejectsBadTables) {
  CdfTable t;
  t.cumulative = {0, 100, 100, kCdfTotal};
  EXPECT_THROW(t.validate(), Error);
  t.cumulative = {0, 100, kCdfTotal - 1};
  EXPECT_THROW(t.validate(), Error);
  t.cumulative = {0, kCdfTotal};
  t.escape = 1;
  EXPECT_THROW(t.validate(), Error);
}

TEST(RangeCoder, EmptyStream) {
  const auto t = quantize_cdf(std::vector<double>{1, 2, 3});
  const auto bytes = range_encode(std::vector<int32_t>{}, t);
  EXPECT_LE(bytes.size(), 8u);
  EXPECT_TRUE(range_decode(bytes, t, 0).empty());
}

TEST(RangeCoder, Uniform256IsEightBitsPerSymbol) {
  const auto t = quantize_cdf(std::vector<double>(256, 1.0));
  Rng rng(1);
  std::vector<int32_t> v(1000);
  for (auto& x : v) x = static_cast<int32_t>(rng.below(256));
  const auto bytes = range_encode(v, t);
  EXPECT_NEAR(static_cast<double>(bytes.size()), 1000.0, 16.0);
  EXPECT_EQ(range_decode(bytes, t, v.size()), v);
}

TEST(RangeCoder, EscapeCarriesAnyInt32) {
  const auto t = quantize_cdf(std::vector<double>{0.3, 0.3, 0.3, 0.1}, -1, 3);
  const std::vector<int32_t> v{-1, 0, 1, 2, -2, INT32_MIN, INT32_MAX, 123456, 0};
  const auto bytes = range_encode(v, t);
  EXPECT_EQ(range_decode(bytes, t, v.size()), v);
  const auto no_escape = quantize_cdf(std::vector<double>{1, 1});
  EXPECT_THROW(range_encode(std::vector<int32_t>{5}, no_escape), Error);
}

TEST(RangeCoder, CountMismatchAndTruncation) {
  const auto t = quantize_cdf(std::vector<double>(16, 1.0));
  std::vector<int32_t> v(400);
  Rng rng(2);
  for (auto& x : v) x = static_cast<int32_t>(rng.below(16));
  const auto bytes = range_encode(v, t);
  std::vector<const CdfTable*> tabs(3, &t);
  EXPECT_THROW(range_encode(v, std::span<const CdfTable* const>(tabs)), Error);
  const std::vector<uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(bytes.size() / 2));
  EXPECT_THROW(range_decode(cut, t, v.size()), Error);
}

TEST(RangeCoder, FuzzRoundTripAndCrossEntropyBound) {
  Rng rng(31);
  for (int it = 0; it < 3000; ++it) {
    const auto c = testing::random_coder_case(rng, 200);
    const auto bytes = range_encode(c.values, c.per_value);
    ASSERT_EQ(range_decode(bytes, c.per_value, c.values.size()), c.values) << "case " << it;
    const double ce = table_cross_entropy(c.values, c.per_value) / 8.0;
    EXPECT_LE(static_cast<double>(bytes.size()), ce * 1.005 + 16.0) << "case " << it;
  }
}

TEST(RangeCoder, LongStreamNearCrossEntropy) {
  Rng rng(41);
  std::vector<double> m(300);
  for (double& v : m) v = std::exp(-10.0 * rng.uniform());
  const auto t = quantize_cdf(m);
  std::vector<int32_t> v(100000);
  // Draw from the quantized distribution itself.
  for (auto& x : v) {
    const uint32_t r = static_cast<uint32_t>(rng.below(kCdfTotal));
    x = static_cast<int32_t>(std::upper_bound(t.cumulative.begin(), t.cumulative.end(), r) - t.cumulative.begin() - 1);
  }
  const auto bytes = range_encode(v, t);
  std::vector<const CdfTable*> tabs(v.size(), &t);
  const double ce = table_cross_entropy(v, tabs) / 8.0;
  EXPECT_LE(static_cast<double>(bytes.size()), ce * 1.005 + 16.0);
  EXPECT_GE(static_cast<double>(bytes.size()), ce * 0.999);
  EXPECT_EQ(range_decode(bytes, t, v.size()), v);
}

// A symbol far below 2^-16 costs close to its own information content.
TEST(RangeCoder, RareSymbolsCostTheirInformation) {
  const auto t = quantize_cdf(std::vector<double>{1.0 - 2e-9, 1e-9, 1e-9});
  const std::vector<int32_t> v(200, 1);
  const auto bytes = range_encode(v, t);
  EXPECT_NEAR(static_cast<double>(bytes.size()) * 8.0, 200 * -std::log2(1e-9), 0.02 * 200 * 29.9 + 64);
  EXPECT_EQ(range_decode(bytes, t, v.size()), v);
}

TEST(RangeCoder, DeterministicBytes) {
  Rng a(5), b(5);
  const auto ca = testing::random_coder_case(a, 500), cb = testing::random_coder_case(b, 500);
  EXPECT_EQ(range_encode(ca.values, ca.per_value), range_encode(cb.values, cb.per_value));
}

TEST(WindowTable, EscapeTakesResidualMass) {
  const auto t = window_table(-2, 2, [](int32_t v) { return v == 0 ? 0.5 : 0.1; });
  EXPECT_EQ(t.alphabet(), 6u);
  EXPECT_EQ(t.offset, -2);
  EXPECT_EQ(t.escape, 5);
  EXPECT_EQ(t.symbol_of(3), 5);
  EXPECT_EQ(t.symbol_of(-3), 5);
  EXPECT_EQ(t.symbol_of(0), 2);
}

}  // namespace
}  // namespace ropc
