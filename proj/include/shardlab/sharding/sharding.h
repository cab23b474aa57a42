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

#ifndef SHARDLAB_SHARDING_SHARDING_H_
#define SHARDLAB_SHARDING_SHARDING_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include "absl/strings/string_view.h"
#include <vector>

#include "absl/status/statusor.h"
#include "absl/types/span.h"
#include "shardlab/ir/shape.h"

namespace shardlab {

// Logical multi-dimensional arrangement of device ids. Device order is
// significant: collectives generated from mesh-based shardings follow it.
struct DeviceMesh {
  std::vector<int64_t> dims;
  std::vector<int64_t> device_ids;  // row-major, size == product(dims)

  // Mesh with ids 0..n-1 in row-major order.
  static DeviceMesh Iota(std::vector<int64_t> dims);
  absl::Status Validate() const;
  int64_t num_devices() const { return Product(dims); }
  bool operator==(const DeviceMesh&) const = default;
};

// How a tensor is distributed across devices.
//
// Tiled and partially tiled shardings store an explicit tile assignment: an
// array of device ids with one dimension per data dimension (plus a trailing
// replication dimension for partial tiling). A device owns the tile that
// matches its position in the array.
class Sharding {
 public:
  enum class Kind { kReplicated, kTiled, kPartialTiled };

  Sharding() = default;

  static Sharding Replicate();
  // `tile_dims` has one entry per data dimension.
  static absl::StatusOr<Sharding> Tile(std::vector<int64_t> tile_dims,
                                       std::vector<int64_t> devices);
  // `tile_dims` has one entry per data dimension plus the trailing
  // replication-subgroup extent. Degenerate forms are normalized: a
  // replication extent of 1 yields Tiled, no data tiling yields Replicated.
  static absl::StatusOr<Sharding> PartialTile(std::vector<int64_t> tile_dims,
                                              std::vector<int64_t> devices);

  Kind kind() const { return kind_; }
  bool IsReplicated() const { return kind_ == Kind::kReplicated; }
  bool IsTiled() const { return kind_ == Kind::kTiled; }
  bool IsPartialTiled() const { return kind_ == Kind::kPartialTiled; }

  // Rank of the data this sharding applies to; -1 when replicated.
  int64_t data_rank() const;
  // Tiles along data dimension `dim` (1 for replicated).
  int64_t num_tiles(int64_t dim) const;
  int64_t total_tiles() const;
  // Devices per replication subgroup (1 for tiled).
  int64_t replication_size() const;
  // Full tile-assignment extents, including the trailing replication dim.
  const std::vector<int64_t>& tile_assignment_dims() const { return tile_dims_; }
  // Row-major device ids of the tile assignment (empty when replicated).
  const std::vector<int64_t>& devices() const { return devices_; }
  bool HasDevice(int64_t device) const;

  // Per-data-dim tile coordinate of `device`; all zeros when replicated.
  std::optional<std::vector<int64_t>> TileCoordinate(int64_t device,
                                                     int64_t rank) const;
  // Index of `device` within its replication subgroup.
  std::optional<int64_t> ReplicaIndex(int64_t device) const;
  // Device at a full tile-assignment index (data coords + replica index).
  int64_t DeviceAt(absl::Span<const int64_t> full_index) const;

  // Data dims with more than one tile.
  std::vector<int64_t> ShardedDims() const;

  const std::set<int64_t>& unspecified_dims() const { return unspecified_dims_; }
  Sharding WithUnspecifiedDims(std::set<int64_t> dims) const;

  std::string ToString() const;
  static absl::StatusOr<Sharding> Parse(absl::string_view text);

  bool operator==(const Sharding& other) const = default;

 private:
  Kind kind_ = Kind::kReplicated;
  std::vector<int64_t> tile_dims_;
  std::vector<int64_t> devices_;
  std::set<int64_t> unspecified_dims_;
};

// Builds a sharding from a device mesh and a per-dimension mapping to mesh
// dims (-1 for none). Unused mesh dims become replication subgroups.
absl::StatusOr<Sharding> MeshSplit(int64_t rank, const DeviceMesh& mesh,
                                   absl::Span<const int64_t> dims_mapping);

absl::StatusOr<Shape> ShardShape(const Shape& shape, const Sharding& sharding);
int64_t ShardSize(int64_t dim_size, const Sharding& sharding, int64_t dim);

// Element offset of `device`'s shard along `dim`.
absl::StatusOr<int64_t> ShardOffset(const Sharding& sharding,
                                    const Shape& shape, int64_t device,
                                    int64_t dim);

// Merges two shardings of the same data rank so that each device keeps its
// offsets on every dimension sharded by either input. Returns nullopt when the
// shardings are incompatible.
std::optional<Sharding> MergeShardings(const Sharding& s0, const Sharding& s1,
                                       int64_t rank);

// True when `a` has strictly more tiles than `b`.
bool IsMoreSpecific(const Sharding& a, const Sharding& b, int64_t rank);

// Two shardings agree on every device's tile for all `rank` data dims. The
// order of devices inside replication subgroups is ignored.
bool SameTiling(const Sharding& a, const Sharding& b, int64_t rank,
                absl::Span<const int64_t> all_devices);

// Builds a sharding over `devices` (in the given order) where each device's
// tile coordinate is `coord(device)`. Devices sharing a coordinate form a
// replication subgroup, ordered as in `devices`. Returns nullopt when some
// coordinate is missing or subgroups have unequal sizes.
std::optional<Sharding> ShardingFromCoordinates(
    absl::Span<const int64_t> tile_counts, absl::Span<const int64_t> devices,
    const std::function<std::vector<int64_t>(int64_t)>& coord);

// Moves the tiling of `dims` into the replication subgroups.
Sharding ReplicateDims(const Sharding& sharding, int64_t rank,
                       absl::Span<const int64_t> dims);

// Re-expresses a sharding of a rank-`rank` value on a value of rank
// `new_rank` where data dim i maps to `dim_map[i]` (or -1 to drop it).
// Unmapped new dims are unsharded.
Sharding TransposeShardingDims(const Sharding& sharding, int64_t rank,
                               absl::Span<const int64_t> dim_map,
                               int64_t new_rank);

// Devices in tile-assignment order; for replicated shardings, `all_devices`.
std::vector<int64_t> ShardingDevices(const Sharding& s,
                                     absl::Span<const int64_t> all_devices);

}  // namespace shardlab

#endif  // SHARDLAB_SHARDING_SHARDING_H_
