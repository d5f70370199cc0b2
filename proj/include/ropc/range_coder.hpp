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

// Static-model range coder with 31-bit frequency tables. The smallest count,
// 2^-31, sits below the entropy model's 1e-9 mass floor, so coded sizes
// track -log2 p even for very unlikely symbols.
//
// Values are integers; each table covers a contiguous window of values
// starting at `offset`, plus one escape symbol. A value outside the window
// is coded as the escape symbol followed by its 32-bit two's complement
// pattern in two uniform 16-bit chunks.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace ropc {

inline constexpr int kCdfPrecision = 31;
inline constexpr uint32_t kCdfTotal = 1u << kCdfPrecision;
inline constexpr std::size_t kMaxAlphabet = std::size_t{1} << 15;

struct CdfTable {
  // cumulative[0] = 0, cumulative[alphabet] = kCdfTotal, strictly increasing.
  std::vector<uint32_t> cumulative;
  int32_t offset = 0;   // value coded by symbol 0
  int32_t escape = -1;  // escape symbol index, or -1 when there is none

  std::size_t alphabet() const { return cumulative.empty() ? 0 : cumulative.size() - 1; }
  uint32_t count(std::size_t s) const { return cumulative[s + 1] - cumulative[s]; }

  // Symbol for value v, or `escape` when v is outside the window.
  int32_t symbol_of(int64_t v) const;

  // Checks the structural invariants; throws on violation.
  void validate() const;
};

// Allocates kCdfTotal counts in proportion to the masses, at least one each,
// distributing leftovers by largest remainder (ties to the lower index).
std::vector<uint32_t> quantize_counts(std::span<const double> masses);

CdfTable quantize_cdf(std::span<const double> masses, int32_t offset = 0, int32_t escape = -1);

// Table over [lo, hi] plus a trailing escape symbol that takes the
// remaining probability.
template <typename MassFn>
CdfTable window_table(int32_t lo, int32_t hi, MassFn&& mass) {
  std::vector<double> m(static_cast<std::size_t>(hi - lo + 2));
  double total = 0.0;
  for (int32_t v = lo; v <= hi; ++v) total += (m[static_cast<std::size_t>(v - lo)] = mass(v));
  m.back() = std::max(1.0 - total, 1e-9);
  return quantize_cdf(m, lo, hi - lo + 1);
}

// Ideal code length of the values under the tables in bits, including the
// 32 raw bits that follow each escape.
double table_cross_entropy(std::span<const int32_t> values, std::span<const CdfTable* const> tables);

class RangeEncoder {
 public:
  void encode_symbol(uint32_t cum, uint32_t freq);
  void encode_bits(uint32_t value, int bits);  // bits <= 16, uniform
  void encode(int32_t value, const CdfTable& table);
  std::vector<uint8_t> finish();

 private:
  void normalize();

  uint64_t low_ = 0;
  uint64_t range_ = ~uint64_t{0};
  std::vector<uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const uint8_t> bytes);
  int32_t decode(const CdfTable& table);

 private:
  uint32_t peek_count();
  uint32_t read_bits(int bits);
  void consume(uint32_t cum, uint32_t freq);
  void renormalize();
  uint8_t next_byte();

  std::span<const uint8_t> in_;
  std::size_t pos_ = 0;
  uint64_t low_ = 0;
  uint64_t range_ = ~uint64_t{0};
  uint64_t code_ = 0;
};

std::vector<uint8_t> range_encode(std::span<const int32_t> values, std::span<const CdfTable* const> tables);
std::vector<int32_t> range_decode(std::span<const uint8_t> bytes, std::span<const CdfTable* const> tables,
                                  std::size_t n);

// Same table for every value.
std::vector<uint8_t> range_encode(std::span<const int32_t> values, const CdfTable& table);
std::vector<int32_t> range_decode(std::span<const uint8_t> bytes, const CdfTable& table, std::size_t n);

}  // namespace ropc
