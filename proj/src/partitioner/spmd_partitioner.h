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

// Internal partitioner machinery shared by the op handlers.

#ifndef SHARDLAB_SRC_PARTITIONER_SPMD_PARTITIONER_H_
#define SHARDLAB_SRC_PARTITIONER_SPMD_PARTITIONER_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "shardlab/ir/builder.h"
#include "shardlab/partitioner/context.h"
#include "shardlab/partitioner/spmd_program.h"
#include "shardlab/sharding/sharding.h"

namespace shardlab::spmd {

// A partitioned value: `id` holds this partition's shard of a `base`-shaped
// value distributed by `sharding` over the context's logical partitions.
struct PValue {
  int64_t id = -1;
  Shape base;
  Sharding sharding;
};

Shape LocalShape(const Shape& base, const Sharding& sharding);

// Tile coordinate of each logical partition along `dim` (0 if untiled).
std::vector<int64_t> CoordinatesAlong(const Sharding& s, int64_t rank,
                                      int64_t dim, int64_t num_logical);

// Logical partitions that differ only in their coordinates on `dims`
// (same other coordinates and replica index), each ordered by those
// coordinates. Groups are listed in order of their first member.
std::vector<std::vector<int64_t>> GroupsAlong(const Sharding& s, int64_t rank,
                                              const std::vector<int64_t>& dims,
                                              int64_t num_logical);

// Per-device ring cost of a collective in bytes; 0 for other ops.
double CollectiveCost(const Graph& graph, const Instruction& instr);

class SpmdPartitioner {
 public:
  explicit SpmdPartitioner(int64_t num_devices);

  GraphBuilder& b() { return b_; }
  const PartitionContext& root() const { return root_; }
  std::vector<HaloSpec>& halos() { return halos_; }
  // Name used for halo records.
  void set_current(std::string name) { current_ = std::move(name); }

  // Cached scalar constant.
  int64_t Scalar(DType dtype, double value);
  // Logical partition id of the executing device in `ctx`, s32[].
  int64_t PartitionIdOf(const PartitionContext& ctx);
  // s32[] holding values[logical partition].
  int64_t PerPartition(const std::vector<int64_t>& values,
                       const PartitionContext& ctx);
  int64_t BroadcastScalar(int64_t scalar, const std::vector<int64_t>& dims);
  // Identity of `kind` for `dtype` as a scalar constant.
  int64_t Identity(ReduceKind kind, DType dtype);

  int64_t AllReduce(int64_t x, ReduceKind kind,
                    const std::vector<std::vector<int64_t>>& logical,
                    const PartitionContext& ctx);
  int64_t AllGather(int64_t x, int64_t dim,
                    const std::vector<std::vector<int64_t>>& logical,
                    const PartitionContext& ctx);
  int64_t ReduceScatter(int64_t x, ReduceKind kind, int64_t dim,
                        const std::vector<std::vector<int64_t>>& logical,
                        const PartitionContext& ctx);
  int64_t AllToAll(int64_t x, int64_t split_dim, int64_t concat_dim,
                   const std::vector<std::vector<int64_t>>& logical,
                   const PartitionContext& ctx);
  int64_t CollectivePermute(
      int64_t x, const std::vector<std::pair<int64_t, int64_t>>& logical,
      const PartitionContext& ctx);

  // Pads `x` with zeros at the high end of `dim` up to `size`.
  int64_t PadTo(int64_t x, int64_t dim, int64_t size);
  // Slices `x` to [0, size) along `dim` when larger.
  int64_t TrimTo(int64_t x, int64_t dim, int64_t size);

  // Moves `v` to `target` (same base shape).
  absl::StatusOr<PValue> Reshard(const PValue& v, const Sharding& target,
                                 const PartitionContext& ctx);

  // Replaces elements past the end of each unevenly tiled dim in `dims`
  // (all dims when empty) with `fill` (a scalar instruction).
  PValue MaskUneven(const PValue& v, std::vector<int64_t> dims, int64_t fill,
                    const PartitionContext& ctx);

  // Moves data along `dim` so that partition coordinate c holds
  // [start[c], start[c] + width) of the coordinate space in which
  // coordinate c currently holds [c * chunk, (c + 1) * chunk). When
  // `valid_size` is set, positions outside [0, valid_size) are replaced by
  // `fill`. Fails with HaloTooLarge when a halo exceeds `chunk`.
  absl::StatusOr<int64_t> Realign(int64_t x, const Sharding& s, int64_t rank,
                                  int64_t dim, int64_t chunk,
                                  const std::vector<int64_t>& start,
                                  int64_t width,
                                  std::optional<int64_t> valid_size,
                                  int64_t fill, const PartitionContext& ctx);

  // Dry-run support.
  struct Checkpoint {
    GraphBuilder::Checkpoint builder;
    size_t halos;
  };
  Checkpoint MakeCheckpoint() const;
  void Rollback(const Checkpoint& checkpoint);
  double CostSince(const Checkpoint& checkpoint) const;

 private:
  // Same tile counts, different placement.
  absl::StatusOr<PValue> PermuteTiles(const PValue& v, const Sharding& target,
                                      const PartitionContext& ctx);
  PValue Refine(const PValue& v, const Sharding& target,
                const PartitionContext& ctx);
  int64_t MaskRange(int64_t x, int64_t dim, int64_t offset_table_value,
                    int64_t lo, int64_t hi, int64_t fill);

  GraphBuilder b_;
  PartitionContext root_;
  std::vector<HaloSpec> halos_;
  std::string current_;
  std::map<std::pair<int, double>, int64_t> scalars_;
  std::map<PartitionContext, int64_t> partition_ids_;
  std::map<std::pair<PartitionContext, std::vector<int64_t>>, int64_t> tables_;
};

// Op handlers. Each returns the result partitioned with `target`.
absl::StatusOr<PValue> PartitionDot(SpmdPartitioner& p,
                                    const Instruction& instr,
                                    const PValue& lhs, const PValue& rhs,
                                    const Sharding& target,
                                    const PartitionContext& ctx);
absl::StatusOr<PValue> PartitionConvolution(SpmdPartitioner& p,
                                            const Instruction& instr,
                                            const PValue& lhs,
                                            const PValue& rhs,
                                            const Sharding& target,
                                            const PartitionContext& ctx);
// Pad, Slice, Reverse, Reshape, Rotate, Shift. nullopt when the op needs
// the generic replicate-compute-reshard fallback.
absl::StatusOr<std::optional<PValue>> PartitionDataFormatting(
    SpmdPartitioner& p, const Instruction& instr,
    const std::vector<PValue>& operands, const Sharding& target,
    const PartitionContext& ctx);

}  // namespace shardlab::spmd

#endif  // SHARDLAB_SRC_PARTITIONER_SPMD_PARTITIONER_H_
