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

#include "ropc/range_coder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "ropc/common.hpp"

namespace ropc {

namespace {

// Carry-less coder: bytes leave from the top of a 64-bit low register.
constexpr uint64_t kTop = uint64_t{1} << 56;
constexpr uint64_t kBottom = uint64_t{1} << 48;

}  // namespace

int32_t CdfTable::symbol_of(int64_t v) const {
  const int64_t s = v - offset;
  const int64_t n = static_cast<int64_t>(alphabet());
  const bool in_window = s >= 0 && s < n && s != escape;
  return in_window ? static_cast<int32_t>(s) : escape;
}

void CdfTable::validate() const {
  if (cumulative.size() < 2) throw Error("cdf table: empty alphabet");
  if (alphabet() > kMaxAlphabet) throw Error("cdf table: alphabet exceeds 2^15 symbols");
  if (cumulative.front() != 0 || cumulative.back() != kCdfTotal)
    throw Error("cdf table: cumulative counts must span [0, 2^" + std::to_string(kCdfPrecision) + "]");
  for (std::size_t i = 1; i < cumulative.size(); ++i)
    if (cumulative[i] <= cumulative[i - 1]) throw Error("cdf table: counts must be positive");
  if (escape >= static_cast<int32_t>(alphabet())) throw Error("cdf table: escape index out of range");
}

std::vector<uint32_t> quantize_counts(std::span<const double> masses) {
  const std::size_t n = masses.size();
  if (n == 0) throw Error("quantize_cdf: empty alphabet");
  if (n > kMaxAlphabet) throw Error("quantize_cdf: alphabet of " + std::to_string(n) + " exceeds 2^15");
  double total = 0.0;
  for (double m : masses) {
    if (!(m > 0.0) || !std::isfinite(m)) throw Error("quantize_cdf: masses must be positive and finite");
    total += m;
  }
  const uint32_t spare = kCdfTotal - static_cast<uint32_t>(n);
  std::vector<uint32_t> counts(n);
  std::vector<double> frac(n);
  uint32_t used = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double ideal = masses[i] / total * spare;
    const double fl = std::floor(ideal);
    counts[i] = 1 + static_cast<uint32_t>(fl);
    frac[i] = ideal - fl;
    used += static_cast<uint32_t>(fl);
  }
  if (used > spare) throw Error("quantize_cdf: allocation overflow");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  uint32_t left = spare - used;
  if (left > 0) {
    // left < n because every remainder is below one count.
    const auto top = order.begin() + static_cast<std::ptrdiff_t>(std::min<std::size_t>(left, n));
    std::partial_sort(order.begin(), top, order.end(),
                      [&](std::size_t a, std::size_t b) { return frac[a] > frac[b] || (frac[a] == frac[b] && a < b); });
    for (std::size_t k = 0; left > 0; k = (k + 1) % n, --left) ++counts[order[k]];
  }
  return counts;
}

CdfTable quantize_cdf(std::span<const double> masses, int32_t offset, int32_t escape) {
  const auto counts = quantize_counts(masses);
  CdfTable t;
  t.offset = offset;
  t.escape = escape;
  t.cumulative.resize(counts.size() + 1);
  t.cumulative[0] = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) t.cumulative[i + 1] = t.cumulative[i] + counts[i];
  t.validate();
  return t;
}

double table_cross_entropy(std::span<const int32_t> values, std::span<const CdfTable* const> tables) {
  if (values.size() != tables.size()) throw Error("cross entropy: value/table count mismatch");
  double bits = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int32_t s = tables[i]->symbol_of(values[i]);
    if (s < 0) throw Error("cross entropy: value outside a table without escape");
    bits += kCdfPrecision - std::log2(static_cast<double>(tables[i]->count(static_cast<std::size_t>(s))));
    if (s == tables[i]->escape) bits += 32.0;
  }
  return bits;
}

// ---------------------------------------------------------------------------

void RangeEncoder::normalize() {
  while ((low_ ^ (low_ + range_)) < kTop || (range_ < kBottom && ((range_ = (0 - low_) & (kBottom - 1)), true))) {
    out_.push_back(static_cast<uint8_t>(low_ >> 56));
    low_ <<= 8;
    range_ <<= 8;
  }
}

void RangeEncoder::encode_symbol(uint32_t cum, uint32_t freq) {
  const uint64_t r = range_ >> kCdfPrecision;
  low_ += r * cum;
  range_ = r * freq;
  normalize();
}

void RangeEncoder::encode_bits(uint32_t value, int bits) {
  const uint64_t r = range_ >> bits;
  low_ += r * value;
  range_ = r;
  normalize();
}

void RangeEncoder::encode(int32_t value, const CdfTable& table) {
  const int32_t s = table.symbol_of(value);
  if (s < 0) throw Error("range coder: value " + std::to_string(value) + " outside a table without escape");
  encode_symbol(table.cumulative[static_cast<std::size_t>(s)], table.count(static_cast<std::size_t>(s)));
  if (s == table.escape) {
    const uint32_t raw = static_cast<uint32_t>(value);
    encode_bits(raw >> 16, 16);
    encode_bits(raw & 0xFFFFu, 16);
  }
}

std::vector<uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 8; ++i) {
    out_.push_back(static_cast<uint8_t>(low_ >> 56));
    low_ <<= 8;
  }
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const uint8_t> bytes) : in_(bytes) {
  for (int i = 0; i < 8; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
  if (pos_ >= in_.size()) throw Error("range coder: truncated stream");
  return in_[pos_++];
}

uint32_t RangeDecoder::peek_count() {
  const uint64_t r = range_ >> kCdfPrecision;
  const uint64_t v = (code_ - low_) / r;
  if (v >= kCdfTotal) throw Error("range coder: corrupt stream");
  return static_cast<uint32_t>(v);
}

uint32_t RangeDecoder::read_bits(int bits) {
  const uint64_t r = range_ >> bits;
  const uint64_t v = (code_ - low_) / r;
  if (v >> bits) throw Error("range coder: corrupt stream");
  low_ += r * v;
  range_ = r;
  renormalize();
  return static_cast<uint32_t>(v);
}

void RangeDecoder::consume(uint32_t cum, uint32_t freq) {
  const uint64_t r = range_ >> kCdfPrecision;
  low_ += r * cum;
  range_ = r * freq;
  renormalize();
}

void RangeDecoder::renormalize() {
  while ((low_ ^ (low_ + range_)) < kTop || (range_ < kBottom && ((range_ = (0 - low_) & (kBottom - 1)), true))) {
    code_ = (code_ << 8) | next_byte();
    low_ <<= 8;
    range_ <<= 8;
  }
}

int32_t RangeDecoder::decode(const CdfTable& table) {
  const uint32_t v = peek_count();
  const auto it = std::upper_bound(table.cumulative.begin(), table.cumulative.end(), v);
  const std::size_t s = static_cast<std::size_t>(it - table.cumulative.begin()) - 1;
  consume(table.cumulative[s], table.count(s));
  if (static_cast<int32_t>(s) != table.escape) return table.offset + static_cast<int32_t>(s);
  const uint32_t hi = read_bits(16);
  const uint32_t lo = read_bits(16);
  return static_cast<int32_t>((hi << 16) | lo);
}

std::vector<uint8_t> range_encode(std::span<const int32_t> values, std::span<const CdfTable* const> tables) {
  if (values.size() != tables.size())
    throw Error("range coder: " + std::to_string(values.size()) + " values but " + std::to_string(tables.size()) +
                " tables");
  RangeEncoder enc;
  for (std::size_t i = 0; i < values.size(); ++i) enc.encode(values[i], *tables[i]);
  return enc.finish();
}

std::vector<int32_t> range_decode(std::span<const uint8_t> bytes, std::span<const CdfTable* const> tables,
                                  std::size_t n) {
  if (n != tables.size())
    throw Error("range coder: " + std::to_string(n) + " symbols but " + std::to_string(tables.size()) + " tables");
  RangeDecoder dec(bytes);
  std::vector<int32_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = dec.decode(*tables[i]);
  return out;
}

std::vector<uint8_t> range_encode(std::span<const int32_t> values, const CdfTable& table) {
  std::vector<const CdfTable*> t(values.size(), &table);
  return range_encode(values, t);
}

std::vector<int32_t> range_decode(std::span<const uint8_t> bytes, const CdfTable& table, std::size_t n) {
  std::vector<const CdfTable*> t(n, &table);
  return range_decode(bytes, t, n);
}

}  // namespace ropc
