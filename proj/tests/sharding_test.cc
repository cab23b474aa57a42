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

#include <random>

#include "gtest/gtest.h"
#include "shardlab/sharding/shard_data.h"
#include "shardlab/sharding/sharding.h"

namespace shardlab {
namespace {

const std::vector<int64_t> kFour = {0, 1, 2, 3};

Sharding Split(int64_t rank, std::vector<int64_t> mesh_dims,
               std::vector<int64_t> mapping) {
  return *MeshSplit(rank, DeviceMesh::Iota(std::move(mesh_dims)), mapping);
}

// Offset oracle: locate the device in the flat tile assignment directly.
int64_t OracleOffset(const Sharding& s, const Shape& shape, int64_t device,
                     int64_t dim) {
  const auto& dims = s.tile_assignment_dims();
  const auto& devs = s.devices();
  int64_t pos = std::find(devs.begin(), devs.end(), device) - devs.begin();
  int64_t stride = 1;
  for (size_t i = dim + 1; i < dims.size(); ++i) stride *= dims[i];
  const int64_t coord = (pos / stride) % dims[dim];
  return coord * ((shape.dims[dim] + dims[dim] - 1) / dims[dim]);
}

TEST(MeshSplitTest, FullMappingIsTiled) {
  Sharding s = Split(2, {2, 2}, {0, 1});
  EXPECT_TRUE(s.IsTiled());
  EXPECT_EQ(s.ToString(), "devices=[2,2]0,1,2,3");
}

TEST(MeshSplitTest, SwappedMappingTransposesAssignment) {
  EXPECT_EQ(Split(2, {2, 2}, {1, 0}).ToString(), "devices=[2,2]0,2,1,3");
}

TEST(MeshSplitTest, PartialMappingReplicatesUnusedMeshDims) {
  Sharding s = Split(3, {2, 2}, {0, -1, -1});
  ASSERT_TRUE(s.IsPartialTiled());
  EXPECT_EQ(s.tile_assignment_dims(), (std::vector<int64_t>{2, 1, 1, 2}));
  // Devices sharing mesh row coordinate form one replication subgroup.
  for (int64_t d : kFour) {
    EXPECT_EQ((*s.TileCoordinate(d, 3))[0], d / 2);
    EXPECT_EQ(*s.ReplicaIndex(d), d % 2);
  }
}

TEST(MeshSplitTest, ReplicatedWhenNothingMapped) {
  EXPECT_TRUE(Split(2, {2, 2}, {-1, -1}).IsReplicated());
}

TEST(MeshSplitTest, Errors) {
  auto mesh = DeviceMesh::Iota({2, 2});
  auto dup = MeshSplit(2, mesh, {0, 0});
  ASSERT_FALSE(dup.ok());
  EXPECT_NE(dup.status().message().find("DuplicateMeshDim"), absl::string_view::npos);
  auto range = MeshSplit(2, mesh, {2, -1});
  ASSERT_FALSE(range.ok());
  EXPECT_NE(range.status().message().find("MeshDimOutOfRange"), absl::string_view::npos);
}

TEST(MeshSplitTest, NonIotaMeshOrderIsPreserved) {
  DeviceMesh mesh{{2, 2}, {3, 1, 2, 0}};
  EXPECT_EQ(MeshSplit(1, mesh, {1})->ToString(),
            "devices=[2,2]3,2,1,0 last_tile_dim_replicate");
}

TEST(ShardShapeTest, CeilRule) {
  auto s = *Sharding::Tile({4}, kFour);
  EXPECT_EQ(ShardShape(Shape(DType::kF32, {7}), s)->dims, std::vector<int64_t>{2});
  EXPECT_EQ(ShardShape(Shape(DType::kF32, {3, 2}), *Sharding::Tile({2, 1}, {0, 1}))->dims,
            (std::vector<int64_t>{2, 2}));
  EXPECT_EQ(ShardShape(Shape(DType::kF32, {6}), *Sharding::Tile({2}, {0, 1}))->dims,
            std::vector<int64_t>{3});
  auto bad = ShardShape(Shape(DType::kF32, {6, 2}), s);
  ASSERT_FALSE(bad.ok());
  EXPECT_NE(bad.status().message().find("RankMismatch"), absl::string_view::npos);
}

TEST(ShardOffsetTest, Examples) {
  Sharding s = *Sharding::Tile({2, 2}, {0, 2, 1, 3});
  const Shape shape(DType::kF32, {8, 8});
  EXPECT_EQ(*ShardOffset(s, shape, 3, 0), 4);
  EXPECT_EQ(*ShardOffset(s, shape, 3, 0), OracleOffset(s, shape, 3, 0));
  EXPECT_EQ(*ShardOffset(Sharding::Replicate(), shape, 2, 1), 0);
  Sharding four = *Sharding::Tile({4}, kFour);
  EXPECT_EQ(*ShardOffset(four, Shape(DType::kF32, {7}), 3, 0), 6);
  auto missing = ShardOffset(four, Shape(DType::kF32, {7}), 9, 0);
  ASSERT_FALSE(missing.ok());
  EXPECT_NE(missing.status().message().find("DeviceNotInSharding"),
            absl::string_view::npos);
}

TEST(ShardOffsetTest, MatchesOracleForAllMeshSplits) {
  const Shape shape(DType::kF32, {7, 5, 3});
  for (int64_t a = -1; a < 3; ++a) {
    for (int64_t b = -1; b < 3; ++b) {
      for (int64_t c = -1; c < 3; ++c) {
        std::vector<int64_t> m = {a, b, c};
        auto s = MeshSplit(3, DeviceMesh::Iota({2, 2, 2}), m);
        if (!s.ok() || s->IsReplicated()) continue;
        for (int64_t d = 0; d < 8; ++d) {
          for (int64_t dim = 0; dim < 3; ++dim) {
            EXPECT_EQ(*ShardOffset(*s, shape, d, dim), OracleOffset(*s, shape, d, dim));
          }
        }
      }
    }
  }
}

TEST(ShardingTextTest, RoundTrip) {
  for (const char* text :
       {"replicated", "devices=[2,2]0,2,1,3",
        "devices=[2,1,2]0,1,2,3 last_tile_dim_replicate",
        "devices=[4]3,2,1,0 unspecified_dims={0}",
        "replicated unspecified_dims={0,1}"}) {
    auto s = Sharding::Parse(text);
    ASSERT_TRUE(s.ok()) << text << ": " << s.status();
    EXPECT_EQ(s->ToString(), text);
  }
  EXPECT_FALSE(Sharding::Parse("devices=[2]0,0").ok());
  EXPECT_FALSE(Sharding::Parse("devices=[3]0,1").ok());
}

TEST(MergeTest, OrthogonalDimsMergeToTwoD) {
  Sharding s0 = Split(2, {2, 2}, {0, -1});
  Sharding s1 = Split(2, {2, 2}, {-1, 1});
  auto m = MergeShardings(s0, s1, 2);
  ASSERT_TRUE(m.has_value());
  EXPECT_EQ(m->ToString(), "devices=[2,2]0,1,2,3");
}

TEST(MergeTest, Idempotent) {
  for (const Sharding& s :
       {Split(2, {2, 2}, {0, -1}), Split(2, {2, 2}, {1, 0}), Sharding::Replicate()}) {
    auto m = MergeShardings(s, s, 2);
    ASSERT_TRUE(m.has_value());
    EXPECT_EQ(*m, s);
  }
}

TEST(MergeTest, SameDimDifferentMeshAxesIsIncompatible) {
  Sharding s0 = Split(2, {2, 2}, {0, -1});
  Sharding s1 = Split(2, {2, 2}, {1, -1});
  EXPECT_FALSE(MergeShardings(s0, s1, 2).has_value());
  // Oracle: some device has different dim-0 offsets in the two shardings.
  const Shape shape(DType::kF32, {4, 4});
  bool differs = false;
  for (int64_t d : kFour) {
    differs |= *ShardOffset(s0, shape, d, 0) != *ShardOffset(s1, shape, d, 0);
  }
  EXPECT_TRUE(differs);
}

// Commutativity up to offsets, and the offset condition, over random pairs.
TEST(MergeTest, OffsetConditionAndCommutativity) {
  std::mt19937 rng(7);
  const Shape shape(DType::kF32, {4, 4, 4});
  DeviceMesh mesh = DeviceMesh::Iota({2, 2, 2});
  std::vector<int64_t> all(8);
  for (int i = 0; i < 8; ++i) all[i] = i;
  auto random_split = [&]() {
    while (true) {
      std::vector<int64_t> m(3);
      for (auto& v : m) v = static_cast<int64_t>(rng() % 4) - 1;
      auto s = MeshSplit(3, mesh, m);
      if (s.ok()) return *s;
    }
  };
  int merged_count = 0;
  for (int iter = 0; iter < 300; ++iter) {
    Sharding a = random_split(), b = random_split();
    auto ab = MergeShardings(a, b, 3);
    auto ba = MergeShardings(b, a, 3);
    ASSERT_EQ(ab.has_value(), ba.has_value());
    if (!ab) continue;
    ++merged_count;
    for (int64_t d : all) {
      for (int64_t dim = 0; dim < 3; ++dim) {
        const int64_t off = *ShardOffset(*ab, shape, d, dim);
        EXPECT_EQ(off, *ShardOffset(*ba, shape, d, dim));
        if (a.num_tiles(dim) > 1) EXPECT_EQ(off, *ShardOffset(a, shape, d, dim));
        if (b.num_tiles(dim) > 1) EXPECT_EQ(off, *ShardOffset(b, shape, d, dim));
      }
    }
  }
  EXPECT_GT(merged_count, 50);
}

TEST(ShardDataTest, EvenSplit) {
  Tensor t = Tensor::Iota(Shape(DType::kS32, {6}));
  auto shards = *ShardData(t, *Sharding::Tile({2}, {0, 1}), {0, 1});
  EXPECT_EQ(shards.at(0).data(), (std::vector<double>{0, 1, 2}));
  EXPECT_EQ(shards.at(1).data(), (std::vector<double>{3, 4, 5}));
}

TEST(ShardDataTest, UnevenSplitPads) {
  Tensor t = Tensor::Iota(Shape(DType::kS32, {7}));
  auto s = *Sharding::Tile({4}, kFour);
  auto shards = *ShardData(t, s, kFour, 0);
  EXPECT_EQ(shards.at(0).data(), (std::vector<double>{0, 1}));
  EXPECT_EQ(shards.at(2).data(), (std::vector<double>{4, 5}));
  EXPECT_EQ(shards.at(3).data(), (std::vector<double>{6, 0}));
  auto back = AssembleData(shards, s, t.shape(), kFour);
  ASSERT_TRUE(back.ok());
  EXPECT_EQ(*back, t);
}

TEST(ShardDataTest, ReplicatedCopiesAndDivergence) {
  Tensor t = Tensor::Iota(Shape(DType::kF32, {3}));
  auto shards = *ShardData(t, Sharding::Replicate(), {0, 1});
  EXPECT_EQ(shards.at(0), t);
  EXPECT_EQ(shards.at(1), t);
  shards.at(1).set_flat(2, 2.5);
  auto bad = AssembleData(shards, Sharding::Replicate(), t.shape(), {0, 1});
  ASSERT_FALSE(bad.ok());
  EXPECT_NE(bad.status().message().find("ReplicaDivergence"), absl::string_view::npos);
  shards.erase(1);
  auto missing = AssembleData(shards, Sharding::Replicate(), t.shape(), {0, 1});
  ASSERT_FALSE(missing.ok());
  EXPECT_NE(missing.status().message().find("MissingShard"), absl::string_view::npos);
}

TEST(ShardDataTest, PartialTiledRoundTrip) {
  Tensor t = Tensor::Iota(Shape(DType::kF32, {4, 4}));
  Sharding s = Split(2, {2, 2}, {0, -1});
  auto shards = *ShardData(t, s, kFour);
  EXPECT_EQ(shards.at(0), shards.at(1));
  EXPECT_EQ(shards.at(2), shards.at(3));
  EXPECT_EQ(*AssembleData(shards, s, t.shape(), kFour), t);
}

TEST(ShardDataTest, RandomRoundTripsAllKinds) {
  std::mt19937 rng(11);
  for (int iter = 0; iter < 200; ++iter) {
    const int64_t rank = 1 + rng() % 3;
    std::vector<int64_t> dims(rank);
    for (auto& d : dims) d = 1 + rng() % 12;
    const int64_t n = std::vector<int64_t>{2, 4, 8}[rng() % 3];
    std::vector<int64_t> mesh_dims = n == 2   ? std::vector<int64_t>{2}
                                     : n == 4 ? std::vector<int64_t>{2, 2}
                                              : std::vector<int64_t>{2, 2, 2};
    std::vector<int64_t> mapping(rank, -1);
    for (int64_t m = 0; m < static_cast<int64_t>(mesh_dims.size()); ++m) {
      const int64_t target = static_cast<int64_t>(rng() % (rank + 1)) - 1;
      if (target >= 0 && mapping[target] == -1) mapping[target] = m;
    }
    DeviceMesh mesh = DeviceMesh::Iota(mesh_dims);
    Sharding s = *MeshSplit(rank, mesh, mapping);
    Tensor t(Shape(DType::kS32, dims));
    for (int64_t i = 0; i < t.size(); ++i) t.set_flat(i, static_cast<int32_t>(rng() % 1000));
    const double pad = static_cast<double>(rng() % 5);
    auto shards = ShardData(t, s, mesh.device_ids, pad);
    ASSERT_TRUE(shards.ok());
    auto back = AssembleData(*shards, s, t.shape(), mesh.device_ids);
    ASSERT_TRUE(back.ok()) << back.status();
    EXPECT_EQ(*back, t);
  }
}

TEST(ShardingTest, TilesCoverPaddedDimOncePerSubgroup) {
  Sharding s = Split(2, {2, 2, 2}, {2, 0});
  const Shape shape(DType::kF32, {5, 7});
  for (int64_t dim = 0; dim < 2; ++dim) {
    const int64_t size = ShardSize(shape.dims[dim], s, dim);
    std::map<int64_t, int64_t> cover;  // offset -> count
    for (int64_t d = 0; d < 8; ++d) cover[*ShardOffset(s, shape, d, dim)]++;
    EXPECT_EQ(static_cast<int64_t>(cover.size()), s.num_tiles(dim));
    int64_t expected = 0;
    for (const auto& [off, count] : cover) {
      EXPECT_EQ(off, expected);
      expected += size;
      EXPECT_EQ(count, 8 / s.num_tiles(dim));
    }
  }
}

}  // namespace
}  // namespace shardlab
