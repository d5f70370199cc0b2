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

#include <set>

#include "oracles.hpp"
#include "ropc/sp_trans.hpp"
#include "support.hpp"

namespace ropc {
namespace {

using testing::random_coords;
using testing::randn;

struct Instance {
  CoordSetPtr set;
  SPTransBlock block;
  ParamStore<double> params;
  MatD feats;
};

Instance make_instance(std::size_t n, int32_t extent, int32_t stride, uint64_t seed, Eigen::Index c = 5) {
  Rng rng(seed);
  Instance in;
  in.set = CoordSet::create(random_coords(n, extent, rng, stride), stride);
  in.block = {"blk", c, 3, AttentionKind::kCosine};
  ParamStore<float> pf;
  in.block.init(pf, rng);
  in.params = pf.cast<double>();
  in.feats = randn(static_cast<Eigen::Index>(n), c, rng);
  return in;
}

TEST(SpTrans, MatchesBruteForceSum) {
  for (int32_t stride : {1, 2, 4}) {
    auto in = make_instance(60, 5, stride, 100 + stride);
    Tape<double> tape;
    const auto out = sp_trans_block(tape, in.params, in.block, SparseTensor<double>{in.set, tape.constant(in.feats)});
    const MatD want = oracle::attention_block(in.params, "blk", in.set->coords(), in.feats, 3, stride);
    EXPECT_LE((out.feats->value - want).cwiseAbs().maxCoeff(), 1e-10) << "stride " << stride;
  }
}

TEST(SpTrans, ThreePointClusterFloat) {
  auto in = make_instance(3, 2, 1, 7);
  ParamStore<float> pf = in.params.cast<float>();
  Tape<float> tape;
  const auto out = sp_trans_block(tape, pf, in.block, SparseTensor<float>{in.set, tape.constant(in.feats.cast<float>())});
  const MatD want = oracle::attention_block(in.params, "blk", in.set->coords(), in.feats, 3, 1);
  EXPECT_LE((out.feats->value.cast<double>() - want).cwiseAbs().maxCoeff(), 1e-5);
}

// Isolated point with a hand-set key so that the weight is exactly +-1.
TEST(SpTrans, IsolatedPointParallelAndAntiparallel) {
  for (double sign : {1.0, -1.0}) {
    Rng rng(3);
    const Eigen::Index c = 4;
    SPTransBlock block{"iso", c, 3, AttentionKind::kCosine};
    ParamStore<float> pf;
    block.init(pf, rng);
    ParamStore<double> ps = pf.cast<double>();
    // alpha copies theta with the output layer scaled by sign; delta(0) = 0.
    for (const char* part : {".0.weight", ".0.bias"})
      ps.get(std::string("iso.alpha") + part)->value = ps.get(std::string("iso.theta") + part)->value;
    for (const char* part : {".1.weight", ".1.bias"})
      ps.get(std::string("iso.alpha") + part)->value = sign * ps.get(std::string("iso.theta") + part)->value;
    ps.get("iso.delta.1.weight")->value.setZero();
    ps.get("iso.delta.1.bias")->value.setZero();
    auto set = CoordSet::create({{0, 0, 0}});
    const MatD f = randn(1, c, rng);
    Tape<double> tape;
    const auto out = local_attention(tape, ps, block, SparseTensor<double>{set, tape.constant(f)});
    const Eigen::RowVectorXd lam = oracle::mlp(ps, "iso.lambda", f.row(0));
    EXPECT_LT((out.feats->value.row(0) - sign * lam).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(SpTrans, ZeroValueProjectionIsIdentity) {
  auto in = make_instance(40, 4, 1, 9);
  for (const char* part : {".1.weight", ".1.bias"}) in.params.get(std::string("blk.lambda") + part)->value.setZero();
  Tape<double> tape;
  const auto out = sp_trans_block(tape, in.params, in.block, SparseTensor<double>{in.set, tape.constant(in.feats)});
  EXPECT_EQ(out.feats->value, in.feats);
}

TEST(SpTrans, SkipPathGradient) {
  auto in = make_instance(20, 4, 1, 10);
  for (const char* part : {".1.weight", ".1.bias"}) in.params.get(std::string("blk.lambda") + part)->value.setZero();
  Tape<double> tape;
  auto x = tape.variable(in.feats);
  const auto out = sp_trans_block(tape, in.params, in.block, SparseTensor<double>{in.set, x});
  tape.backward(sum(tape, out.feats));
  EXPECT_LT((x->grad.array() - 1.0).abs().maxCoeff(), 1e-12);
}

TEST(SpTrans, WeightsInCosineRangeAndScaleInvariant) {
  auto in = make_instance(80, 5, 1, 11);
  Tape<double> tape(false);
  auto proj = [&](const ParamStore<double>& ps, const char* name) {
    return Mlp{std::string("blk.") + name, 5, 5, 5}.forward(tape, ps, tape.constant(in.feats))->value;
  };
  const auto nl = build_neighbor_lists(*in.set, 3);
  const MatD table = window_offset_table<double>(3, 1);
  const MatD pos = Mlp{"blk.delta", 3, 5, 5}.forward(tape, in.params, tape.constant(table))->value;
  const auto w = attention_weights<double>(proj(in.params, "theta"), proj(in.params, "alpha"), pos, nl, AttentionKind::kCosine);
  for (double v : w) {
    EXPECT_GE(v, -1.0 - 1e-12);
    EXPECT_LE(v, 1.0 + 1e-12);
  }
  ParamStore<double> scaled = in.params.clone();
  scaled.get("blk.theta.1.weight")->value *= 3.7;
  scaled.get("blk.theta.1.bias")->value *= 3.7;
  const auto w2 = attention_weights<double>(proj(scaled, "theta"), proj(in.params, "alpha"), pos, nl, AttentionKind::kCosine);
  ASSERT_EQ(w.size(), w2.size());
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(w[i], w2[i], 1e-12);
}

// A lone neighbor keeps its cosine weight; softmax would force it to 1.
TEST(SpTrans, WeightNotNormalizedByNeighborCount) {
  auto in = make_instance(1, 1, 1, 12);
  Tape<double> tape(false);
  auto proj = [&](const char* name) {
    return Mlp{std::string("blk.") + name, 5, 5, 5}.forward(tape, in.params, tape.constant(in.feats))->value;
  };
  const auto nl = build_neighbor_lists(*in.set, 3);
  const MatD pos =
      Mlp{"blk.delta", 3, 5, 5}.forward(tape, in.params, tape.constant(window_offset_table<double>(3, 1)))->value;
  const auto cos = attention_weights<double>(proj("theta"), proj("alpha"), pos, nl, AttentionKind::kCosine);
  const auto soft = attention_weights<double>(proj("theta"), proj("alpha"), pos, nl, AttentionKind::kSoftmax);
  ASSERT_EQ(cos.size(), 1u);
  EXPECT_LT(std::abs(cos[0]), 1.0 - 1e-6);
  EXPECT_NEAR(soft[0], 1.0, 1e-12);
}

TEST(SpTrans, ZeroNormGuard) {
  auto in = make_instance(10, 3, 1, 13);
  for (const char* part : {".1.weight", ".1.bias"}) in.params.get(std::string("blk.theta") + part)->value.setZero();
  Tape<double> tape;
  const auto out = local_attention(tape, in.params, in.block, SparseTensor<double>{in.set, tape.constant(in.feats)});
  EXPECT_EQ(out.feats->value, MatD::Zero(10, 5));
}

TEST(SpTrans, PermutationInvariant) {
  auto in = make_instance(50, 4, 1, 14);
  Tape<double> tape;
  const auto a = sp_trans_block(tape, in.params, in.block, SparseTensor<double>{in.set, tape.constant(in.feats)});
  std::vector<Coord> rev(in.set->coords().rbegin(), in.set->coords().rend());
  auto set2 = CoordSet::create(rev);
  const auto b = sp_trans_block(tape, in.params, in.block, SparseTensor<double>{set2, tape.constant(in.feats)});
  EXPECT_EQ(a.feats->value, b.feats->value);
}

}  // namespace
}  // namespace ropc
