/* Copyright 2026 The Shardlab Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include <cmath>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "shardlab/ir/builder.h"
#include "shardlab/simulator/evaluator.h"
#include "shardlab/simulator/spmd_executor.h"

namespace shardlab {
namespace {

Shape F32(std::vector<int64_t> dims) { return Shape(DType::kF32, std::move(dims)); }
Shape S32(std::vector<int64_t> dims) { return Shape(DType::kS32, std::move(dims)); }

Tensor Eval1(const GraphBuilder& b, int64_t out, std::vector<Tensor> inputs) {
  Graph g = b.graph();
  g.outputs = {out};
  auto r = EvaluateSingle(g, inputs);
  EXPECT_TRUE(r.ok()) << r.status();
  return r.ok() ? (*r)[0] : Tensor();
}

TEST(EvaluatorTest, DotWithIdentity) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, F32({2, 2}));
  int64_t i = b.Parameter(1, F32({2, 2}));
  int64_t d = b.Dot(x, i, DotDims{{}, {}, {1}, {0}});
  Tensor a(F32({2, 2}), {1, 2, 3, 4});
  Tensor out = Eval1(b, d, {a, Tensor(F32({2, 2}), {1, 0, 0, 1})});
  EXPECT_EQ(out, a);
}

TEST(EvaluatorTest, ReduceSumOfOnes) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, F32({7}));
  int64_t r = b.Reduce(x, b.ScalarConstant(DType::kF32, 0), {0}, ReduceKind::kSum);
  EXPECT_EQ(Eval1(b, r, {Tensor::Filled(F32({7}), 1)}).flat(0), 7);
}

// Direct construction: dilate the input, pad it, slide a dilated window.
std::vector<double> NestedLoopConv1D(const std::vector<double>& in,
                                     const std::vector<double>& kernel,
                                     const WindowDim& w) {
  std::vector<double> dilated((in.size() - 1) * w.base_dilation + 1, 0.0);
  for (size_t i = 0; i < in.size(); ++i) dilated[i * w.base_dilation] = in[i];
  std::vector<double> padded(w.padding_low, 0.0);
  padded.insert(padded.end(), dilated.begin(), dilated.end());
  padded.insert(padded.end(), w.padding_high, 0.0);
  const int64_t span = (w.size - 1) * w.window_dilation + 1;
  std::vector<double> out;
  for (int64_t s = 0; s + span <= static_cast<int64_t>(padded.size());
       s += w.stride) {
    double acc = 0;
    for (int64_t k = 0; k < w.size; ++k) {
      acc += padded[s + k * w.window_dilation] * kernel[k];
    }
    out.push_back(acc);
  }
  return out;
}

TEST(EvaluatorTest, ConvolutionMatchesNestedLoops) {
  const std::vector<WindowDim> configs = {
      {3, 1, 1, 1, 1, 1}, {3, 2, 2, 0, 1, 1}, {2, 1, 1, 2, 2, 1},
      {3, 1, 2, 2, 1, 2}, {4, 3, 0, 3, 3, 2}, {1, 1, 0, 0, 1, 1},
  };
  const int64_t n = 11;
  for (const WindowDim& w : configs) {
    GraphBuilder b;
    int64_t x = b.Parameter(0, F32({1, 1, n}));
    int64_t k = b.Parameter(1, F32({1, 1, w.size}));
    ConvDims dims;
    dims.lhs_spatial = {2};
    dims.rhs_spatial = {2};
    dims.out_spatial = {2};
    int64_t c = b.Convolution(x, k, dims, {w});
    ASSERT_TRUE(b.ok()) << b.status();
    std::vector<double> in(n), kernel(w.size);
    for (int64_t i = 0; i < n; ++i) in[i] = i + 1;
    for (int64_t i = 0; i < w.size; ++i) kernel[i] = 0.5 * i - 1;
    Tensor out = Eval1(b, c, {Tensor(F32({1, 1, n}), in),
                              Tensor(F32({1, 1, w.size}), kernel)});
    std::vector<double> expected = NestedLoopConv1D(in, kernel, w);
    ASSERT_EQ(out.size(), static_cast<int64_t>(expected.size()));
    for (size_t i = 0; i < expected.size(); ++i) {
      EXPECT_FLOAT_EQ(out.flat(i), expected[i]) << "window size " << w.size;
    }
  }
}

TEST(EvaluatorTest, ConvolutionFeaturesAndBatch) {
  // 2 batches, 3 input features, 2 output features; a 1x1 kernel is a
  // per-position matmul over features.
  GraphBuilder b;
  int64_t x = b.Parameter(0, F32({2, 3, 4}));
  int64_t k = b.Parameter(1, F32({3, 2, 1}));
  ConvDims dims;
  dims.lhs_spatial = {2};
  dims.rhs_spatial = {2};
  dims.out_spatial = {2};
  int64_t c = b.Convolution(x, k, dims, {WindowDim{}});
  Tensor in = Tensor::Iota(F32({2, 3, 4}));
  Tensor kern(F32({3, 2, 1}), {1, 2, 3, 4, 5, 6});
  Tensor out = Eval1(b, c, {in, kern});
  for (int64_t bb = 0; bb < 2; ++bb) {
    for (int64_t o = 0; o < 2; ++o) {
      for (int64_t s = 0; s < 4; ++s) {
        double acc = 0;
        for (int64_t f = 0; f < 3; ++f) acc += in.at({bb, f, s}) * kern.at({f, o, 0});
        EXPECT_EQ(out.at({bb, o, s}), acc);
      }
    }
  }
}

TEST(EvaluatorTest, S32Wraps) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, S32({3}));
  int64_t y = b.Parameter(1, S32({3}));
  int64_t sum = b.Add(x, y);
  int64_t prod = b.Mul(x, y);
  Tensor a(S32({3}), {2147483647, 65536, 46341});
  Tensor c(S32({3}), {1, 65536, 46341});
  Tensor s = Eval1(b, sum, {a, c});
  EXPECT_EQ(s.flat(0), -2147483648.0);
  Tensor p = Eval1(b, prod, {a, c});
  EXPECT_EQ(p.flat(1), 0);
  EXPECT_EQ(p.flat(2), static_cast<double>(static_cast<int32_t>(46341u * 46341u)));
}

TEST(EvaluatorTest, IntegerDivideByZeroIsError) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, S32({2}));
  int64_t y = b.Parameter(1, S32({2}));
  Graph g = b.graph();
  g.outputs = {b.Binary(Opcode::kDivide, x, y)};
  g = b.graph();
  g.outputs = {g.size() - 1};
  auto r = EvaluateSingle(g, {Tensor(S32({2}), {7, -7}), Tensor(S32({2}), {2, 0})});
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.status().message().find("DivideByZero"), absl::string_view::npos);
  auto ok = EvaluateSingle(g, {Tensor(S32({2}), {7, -7}), Tensor(S32({2}), {2, 2})});
  ASSERT_TRUE(ok.ok());
  EXPECT_EQ((*ok)[0].flat(0), 3);
  EXPECT_EQ((*ok)[0].flat(1), -3);
}

TEST(EvaluatorTest, FloatDivideByZeroIsInf) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, F32({1}));
  int64_t d = b.Binary(Opcode::kDivide, x, b.Parameter(1, F32({1})));
  Tensor out = Eval1(b, d, {Tensor(F32({1}), {1}), Tensor(F32({1}), {0})});
  EXPECT_TRUE(std::isinf(out.flat(0)));
}

TEST(EvaluatorTest, RotateAndShift) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, S32({5}));
  int64_t rot = b.Rotate(x, 0, 2);
  int64_t sh = b.Shift(x, b.ScalarConstant(DType::kS32, -1), 0, 2);
  Tensor in(S32({5}), {0, 1, 2, 3, 4});
  EXPECT_EQ(Eval1(b, rot, {in}), Tensor(S32({5}), {2, 3, 4, 0, 1}));
  EXPECT_EQ(Eval1(b, sh, {in}), Tensor(S32({5}), {-1, -1, 0, 1, 2}));
}

TEST(EvaluatorTest, PadWithInterior) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, S32({3}));
  int64_t p = b.Pad(x, b.ScalarConstant(DType::kS32, 9), {PaddingDim{1, 2, 1}});
  Tensor in(S32({3}), {1, 2, 3});
  EXPECT_EQ(Eval1(b, p, {in}), Tensor(S32({8}), {9, 1, 9, 2, 9, 3, 9, 9}));
}

TEST(EvaluatorTest, DynamicSliceClampsStart) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, S32({6}));
  int64_t s = b.Parameter(1, S32({}));
  int64_t ds = b.DynamicSlice(x, {s}, {4});
  Tensor in = Tensor::Iota(S32({6}));
  EXPECT_EQ(Eval1(b, ds, {in, Tensor::Scalar(DType::kS32, 5)}),
            Tensor(S32({4}), {2, 3, 4, 5}));
  EXPECT_EQ(Eval1(b, ds, {in, Tensor::Scalar(DType::kS32, -3)}),
            Tensor(S32({4}), {0, 1, 2, 3}));
}

TEST(EvaluatorTest, RejectsCollectives) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, F32({2}));
  Graph g = b.graph();
  b.AllReduce(x, ReduceKind::kSum, {{0, 1}});
  g = b.graph();
  g.outputs = {1};
  EXPECT_FALSE(EvaluateSingle(g, {Tensor(F32({2}))}).ok());
}

std::vector<int64_t> Devices(int64_t n) {
  std::vector<int64_t> d(n);
  for (int64_t i = 0; i < n; ++i) d[i] = i;
  return d;
}

TEST(SpmdExecutorTest, AllReduceSum) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, F32({}));
  int64_t r = b.AllReduce(x, ReduceKind::kSum, {{0, 1, 2, 3}});
  Graph g = b.graph();
  g.outputs = {r};
  DeviceTensors in;
  for (int64_t d = 0; d < 4; ++d) in[d] = Tensor::Scalar(DType::kF32, d + 1);
  auto out = EvaluateSpmd(g, Devices(4), {in});
  ASSERT_TRUE(out.ok()) << out.status();
  for (int64_t d = 0; d < 4; ++d) EXPECT_EQ((*out)[0].at(d).flat(0), 10);
}

TEST(SpmdExecutorTest, AllToAllPiecePlacement) {
  // d0 = [a, b], d1 = [c, d] -> d0 = [a, c], d1 = [b, d].
  GraphBuilder b;
  int64_t x = b.Parameter(0, S32({2}));
  int64_t t = b.AllToAll(x, 0, 0, {{0, 1}});
  Graph g = b.graph();
  g.outputs = {t};
  DeviceTensors in{{0, Tensor(S32({2}), {1, 2})}, {1, Tensor(S32({2}), {3, 4})}};
  auto out = EvaluateSpmd(g, Devices(2), {in});
  ASSERT_TRUE(out.ok()) << out.status();
  EXPECT_EQ((*out)[0].at(0), Tensor(S32({2}), {1, 3}));
  EXPECT_EQ((*out)[0].at(1), Tensor(S32({2}), {2, 4}));
}

TEST(SpmdExecutorTest, AllToAllTwiceIsIdentity) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, S32({4, 6}));
  int64_t t = b.AllToAll(x, 1, 0, {{0, 1}});
  int64_t back = b.AllToAll(t, 0, 1, {{0, 1}});
  Graph g = b.graph();
  g.outputs = {back};
  DeviceTensors in{{0, Tensor::Iota(S32({4, 6}))},
                   {1, Tensor::Filled(S32({4, 6}), 7)}};
  auto out = EvaluateSpmd(g, Devices(2), {in});
  ASSERT_TRUE(out.ok()) << out.status();
  EXPECT_EQ((*out)[0], in);
}

TEST(SpmdExecutorTest, AllGatherUsesGroupOrder) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, S32({1}));
  int64_t ag = b.AllGather(x, 0, {{1, 0}, {3, 2}});
  Graph g = b.graph();
  g.outputs = {ag};
  DeviceTensors in;
  for (int64_t d = 0; d < 4; ++d) in[d] = Tensor(S32({1}), {double(d)});
  auto out = EvaluateSpmd(g, Devices(4), {in});
  ASSERT_TRUE(out.ok()) << out.status();
  EXPECT_EQ((*out)[0].at(0), Tensor(S32({2}), {1, 0}));
  EXPECT_EQ((*out)[0].at(3), Tensor(S32({2}), {3, 2}));
}

TEST(SpmdExecutorTest, ReduceScatterEqualsAllReduceThenSlice) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(-1, 1);
  GraphBuilder b;
  int64_t x = b.Parameter(0, F32({8, 3}));
  int64_t rs = b.ReduceScatter(x, ReduceKind::kSum, 0, {{0, 1, 2, 3}});
  int64_t ar = b.AllReduce(x, ReduceKind::kSum, {{0, 1, 2, 3}});
  int64_t pid = b.PartitionId();
  int64_t off = b.Mul(pid, b.ScalarConstant(DType::kS32, 2));
  int64_t ds = b.DynamicSlice(ar, {off, b.ScalarConstant(DType::kS32, 0)}, {2, 3});
  ASSERT_TRUE(b.ok()) << b.status();
  Graph g = b.graph();
  g.outputs = {rs, ds};
  for (int trial = 0; trial < 20; ++trial) {
    DeviceTensors in;
    for (int64_t d = 0; d < 4; ++d) {
      Tensor t(F32({8, 3}));
      for (int64_t i = 0; i < t.size(); ++i) t.set_flat(i, dist(rng));
      in[d] = t;
    }
    auto out = EvaluateSpmd(g, Devices(4), {in});
    ASSERT_TRUE(out.ok()) << out.status();
    EXPECT_EQ((*out)[0], (*out)[1]);
  }
}

TEST(SpmdExecutorTest, CollectivePermuteZeroFillsMissingTargets) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, S32({1}));
  int64_t cp = b.CollectivePermute(x, {{0, 1}, {1, 2}});
  Graph g = b.graph();
  g.outputs = {cp};
  DeviceTensors in;
  for (int64_t d = 0; d < 3; ++d) in[d] = Tensor(S32({1}), {double(d + 5)});
  auto out = EvaluateSpmd(g, Devices(3), {in});
  ASSERT_TRUE(out.ok()) << out.status();
  EXPECT_EQ((*out)[0].at(0).flat(0), 0);
  EXPECT_EQ((*out)[0].at(1).flat(0), 5);
  EXPECT_EQ((*out)[0].at(2).flat(0), 6);
}

TEST(SpmdExecutorTest, SubgroupMismatch) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, S32({1}));
  int64_t r = b.AllReduce(x, ReduceKind::kSum, {{0, 1}, {1, 2}});
  Graph g = b.graph();
  g.outputs = {r};
  DeviceTensors in;
  for (int64_t d = 0; d < 4; ++d) in[d] = Tensor(S32({1}));
  auto out = EvaluateSpmd(g, Devices(4), {in});
  ASSERT_FALSE(out.ok());
  EXPECT_NE(out.status().message().find("SubgroupMismatch"), absl::string_view::npos);

  GraphBuilder b2;
  int64_t y = b2.Parameter(0, S32({1}));
  int64_t cp = b2.CollectivePermute(y, {{0, 1}, {2, 1}});
  Graph g2 = b2.graph();
  g2.outputs = {cp};
  auto out2 = EvaluateSpmd(g2, Devices(4), {in});
  ASSERT_FALSE(out2.ok());
  EXPECT_NE(out2.status().message().find("SubgroupMismatch"), absl::string_view::npos);
}

TEST(SpmdExecutorTest, PartitionIdIsDeviceId) {
  GraphBuilder b;
  int64_t p = b.PartitionId();
  Graph g = b.graph();
  g.outputs = {p};
  auto out = EvaluateSpmd(g, Devices(3), {});
  ASSERT_TRUE(out.ok()) << out.status();
  for (int64_t d = 0; d < 3; ++d) EXPECT_EQ((*out)[0].at(d).flat(0), d);
}

}  // namespace
}  // namespace shardlab
