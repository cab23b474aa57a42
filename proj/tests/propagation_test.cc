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

#include <algorithm>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "gtest/gtest.h"
#include "json.hpp"
#include "shardlab/ir/builder.h"
#include "shardlab/ir/text.h"
#include "shardlab/propagation/propagation.h"
#include "shardlab/propagation/rules.h"
#include "shardlab/sharding/shard_data.h"
#include "test_graphs.h"

namespace shardlab {
namespace {

Shape F32(std::vector<int64_t> dims) { return Shape(DType::kF32, std::move(dims)); }

Sharding Split(int64_t rank, std::vector<int64_t> mapping,
               std::vector<int64_t> mesh = {2, 2}) {
  return *MeshSplit(rank, DeviceMesh::Iota(mesh), mapping);
}

std::pair<Graph, PropagationReport> Prop(const Graph& g,
                                        PropagationOptions options = {}) {
  auto r = Propagate(g, options);
  EXPECT_TRUE(r.ok()) << r.status();
  return *r;
}

const Sharding& Final(const Graph& g, absl::string_view name) {
  return *g.instr(*g.FindByName(name)).sharding;
}

TEST(PropagationTest, ElementwiseFirstKeepsLayerConsistent) {
  Graph g = *ParseAndValidateGraph(testing::kLinearLayerText);
  auto [out, report] = Prop(g);
  const Sharding& x = Final(out, "x");
  EXPECT_EQ(x, Split(2, {0, -1}));
  EXPECT_EQ(Final(out, "u"), x);
  EXPECT_EQ(Final(out, "s"), x);
  EXPECT_EQ(Final(out, "r"), x);
  EXPECT_EQ(Final(out, "w"), Split(2, {-1, 0}));
  EXPECT_FALSE(report.hit_iteration_cap);
}

TEST(PropagationTest, WithoutPrioritiesTheLayerMismatches) {
  Graph g = *ParseAndValidateGraph(testing::kLinearLayerText);
  PropagationOptions options;
  options.use_priorities = false;
  auto [out, report] = Prop(g, options);
  EXPECT_NE(Final(out, "u"), Final(out, "s"));
  EXPECT_EQ(Final(out, "u"), Split(2, {-1, 0}));
}

TEST(PropagationTest, EinsumOutputInferredFromWeights) {
  Graph g = *ParseAndValidateGraph(R"(graph @moe (mesh=[2,2]) {
  %a = f32[4,8,6] parameter(0), sharding={mesh_split=[0,-1,-1]}
  %b = f32[4,6,10] parameter(1), sharding={mesh_split=[0,-1,1]}
  %c = f32[4,8,10] dot(%a, %b), lhs_batch_dims={0}, rhs_batch_dims={0}, lhs_contracting_dims={2}, rhs_contracting_dims={1}
  return %c
}
)");
  auto [out, report] = Prop(g);
  EXPECT_EQ(Final(out, "c"), Split(3, {0, -1, 1}));
}

TEST(PropagationTest, FullyAnnotatedGraphIsUnchanged) {
  Graph g = *ParseAndValidateGraph(testing::kLinearLayerText);
  auto [first, r1] = Prop(g);
  auto [second, r2] = Prop(first);
  EXPECT_EQ(first, second);
  EXPECT_TRUE(r2.changes.empty());
  EXPECT_EQ(r2.effective_iterations, 1);
}

TEST(PropagationTest, ElementwiseMergesOperandShardings) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, F32({4, 6}));
  int64_t y = b.Parameter(1, F32({4, 6}));
  b.SetSharding(x, Split(2, {0, -1}));
  b.SetSharding(y, Split(2, {-1, 1}));
  int64_t s = b.Add(x, y);
  Graph g = *b.Build({s});
  auto [out, report] = Prop(g);
  EXPECT_EQ(*out.instr(s).sharding, Split(2, {0, 1}));
}

TEST(PropagationTest, ContractingOnlyDotStaysReplicated) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, F32({4, 6}));
  int64_t w = b.Parameter(1, F32({6, 8}));
  b.SetSharding(x, Split(2, {-1, 0}));
  b.SetSharding(w, Split(2, {0, -1}));
  int64_t d = b.Dot(x, w, DotDims{{}, {}, {1}, {0}});
  Graph g = *b.Build({d});
  auto [out, report] = Prop(g);
  EXPECT_TRUE(out.instr(d).sharding->IsReplicated());
}

TEST(PropagationTest, BackwardRules) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, F32({6}));
  int64_t bc = b.Broadcast(x, {4, 6}, {1});
  b.SetSharding(bc, Split(2, {0, -1}));
  int64_t l = b.Parameter(1, F32({4, 5}));
  int64_t r = b.Parameter(2, F32({5, 3}));
  int64_t d = b.Dot(l, r, DotDims{{}, {}, {1}, {0}});
  b.SetSharding(d, Split(2, {0, -1}));
  int64_t z = b.Parameter(3, F32({4, 7, 3}));
  int64_t red = b.Reduce(z, b.ScalarConstant(DType::kF32, 0), {1}, ReduceKind::kSum);
  b.SetSharding(red, Split(2, {-1, 1}));
  Graph g = *b.Build({bc, d, red});
  auto [out, report] = Prop(g);
  // Broadcast dim 0 is absent in the operand.
  EXPECT_TRUE(out.instr(x).sharding->IsReplicated());
  EXPECT_EQ(*out.instr(l).sharding, Split(2, {0, -1}));
  EXPECT_TRUE(out.instr(r).sharding->IsReplicated());
  EXPECT_EQ(*out.instr(z).sharding, Split(3, {-1, -1, 1}));
}

TEST(PropagationTest, UnspecifiedDimsRefineOnlyOpenDims) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, F32({4, 6}));
  int64_t y = b.Parameter(1, F32({4, 6}));
  int64_t z = b.Parameter(2, F32({4, 6}));
  b.SetSharding(x, Split(2, {0, -1}).WithUnspecifiedDims({1}));
  b.SetSharding(y, Split(2, {-1, 1}));
  b.SetSharding(z, Split(2, {0, -1}));
  int64_t s = b.Add(x, y);
  int64_t t = b.Add(z, y);
  Graph g = *b.Build({s, t});
  auto [out, report] = Prop(g);
  EXPECT_EQ(out.instr(x).sharding->WithUnspecifiedDims({}), Split(2, {0, 1}));
  EXPECT_EQ(out.instr(x).sharding->unspecified_dims(), std::set<int64_t>{1});
  EXPECT_EQ(*out.instr(z).sharding, Split(2, {0, -1}));
}

TEST(PropagationTest, OpenDimsCannotOverrideSpecifiedDims) {
  GraphBuilder b;
  int64_t x = b.Parameter(0, F32({4, 6}));
  int64_t y = b.Parameter(1, F32({4, 6}));
  // x keeps dim 0 unsharded; only dim 1 is open.
  b.SetSharding(x, Sharding::Replicate().WithUnspecifiedDims({1}));
  b.SetSharding(y, Split(2, {0, -1}));
  int64_t s = b.Add(x, y);
  Graph g = *b.Build({s});
  auto [out, report] = Prop(g);
  EXPECT_TRUE(out.instr(x).sharding->WithUnspecifiedDims({}).IsReplicated());
}

TEST(PropagationTest, ChangeLogIsMonotoneAndDeterministic) {
  Graph g = *ParseAndValidateGraph(testing::kLinearLayerText);
  auto [out1, r1] = Prop(g);
  auto [out2, r2] = Prop(g);
  EXPECT_EQ(out1, out2);
  std::map<int64_t, int64_t> tiles;
  for (const ShardingChange& c : r1.changes) {
    const int64_t before = c.old_sharding ? c.old_sharding->total_tiles() : 1;
    EXPECT_GT(c.new_sharding.total_tiles(), before);
    tiles[c.instruction] = c.new_sharding.total_tiles();
  }
  auto trace = nlohmann::json::parse(PropagationTraceJson(out1, r1));
  EXPECT_EQ(trace["changes"].size(), r1.changes.size());
  EXPECT_EQ(trace["final"]["s"], Final(out1, "s").ToString());
}

// Per-device multiset of valid elements of an iota under `s`.
std::map<int64_t, std::multiset<double>> Owned(const Shape& shape,
                                               const Sharding& s,
                                               const std::vector<int64_t>& devices) {
  Tensor iota = Tensor::Iota(shape);
  // Pad with -1 so padding can be told apart from data.
  DeviceTensors shards = *ShardData(iota, s, devices, -1);
  std::map<int64_t, std::multiset<double>> out;
  for (const auto& [d, t] : shards) {
    for (int64_t i = 0; i < t.size(); ++i) {
      if (t.flat(i) >= 0) out[d].insert(t.flat(i));
    }
  }
  return out;
}

TEST(ReshapeShardingTest, MergeDimsKeepsElementOwnership) {
  const std::vector<int64_t> devices = {0, 1, 2, 3};
  Sharding in = *Sharding::Tile({4, 1}, devices);
  Sharding out = ReshapeSharding(in, {4, 3}, {12});
  EXPECT_EQ(out.num_tiles(0), 4);
  EXPECT_EQ(Owned(F32({4, 3}), in, devices), Owned(F32({12}), out, devices));
}

TEST(ReshapeShardingTest, RandomReshapesPreserveOwnership) {
  std::mt19937 rng(11);
  const std::vector<std::pair<std::vector<int64_t>, std::vector<int64_t>>> cases = {
      {{4, 3}, {12}},      {{12}, {2, 6}},      {{2, 6}, {3, 4}},
      {{8, 6}, {4, 2, 6}}, {{4, 2, 6}, {8, 6}}, {{6, 4}, {6, 2, 2}},
      {{1, 8}, {8, 1}},    {{2, 3, 4}, {6, 4}}, {{4, 6}, {24}},
  };
  const std::vector<int64_t> devices = {0, 1, 2, 3, 4, 5, 6, 7};
  int64_t sharded_results = 0;
  for (const auto& [from, to] : cases) {
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<int64_t> perm = devices;
      std::shuffle(perm.begin(), perm.end(), rng);
      std::vector<int64_t> counts(from.size(), 1);
      int64_t left = 8;
      for (size_t d = 0; d < from.size() && left > 1; ++d) {
        const int64_t pick = std::uniform_int_distribution<int>(0, 3)(rng);
        const int64_t c = std::min<int64_t>(int64_t{1} << pick, left);
        if (from[d] % c == 0) {
          counts[d] = c;
          left /= c;
        }
      }
      counts.push_back(left);
      Sharding in = *Sharding::PartialTile(counts, perm);
      Sharding out = ReshapeSharding(in, from, to);
      if (!out.IsReplicated()) ++sharded_results;
      // Whatever the output tiling, each device's valid elements must be a
      // subset of the input's (dropped groups only ever replicate).
      auto a = Owned(F32(from), in, devices);
      auto b = Owned(F32(to), out, devices);
      for (int64_t d : devices) {
        for (double v : b[d]) {
          if (out.total_tiles() == in.total_tiles()) {
            EXPECT_TRUE(a[d].count(v)) << in.ToString() << " -> " << out.ToString();
          }
        }
        if (out.total_tiles() == in.total_tiles()) EXPECT_EQ(a[d], b[d]);
      }
    }
  }
  EXPECT_GT(sharded_results, 50);
}

TEST(ReshapeShardingTest, UnevenGroupIsDropped) {
  Sharding in = *Sharding::Tile({1, 2}, {0, 1});
  // Minor dim split cannot map to a contiguous split of the fused dim.
  EXPECT_TRUE(ReshapeSharding(in, {3, 4}, {12}).IsReplicated());
}

}  // namespace
}  // namespace shardlab
