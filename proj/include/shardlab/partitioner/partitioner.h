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

#ifndef SHARDLAB_PARTITIONER_PARTITIONER_H_
#define SHARDLAB_PARTITIONER_PARTITIONER_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "shardlab/ir/graph.h"
#include "shardlab/partitioner/spmd_program.h"

namespace shardlab {

struct PartitionOptions {
  // Run the rotate/shift rewrite before partitioning.
  bool detect_rotate = true;
};

// Rewrites the graph into one per-device program. Every instruction must
// carry a sharding whose devices are exactly 0..num_partitions-1 (or be
// replicated). Collectives in the input are rejected.
absl::StatusOr<SpmdProgram> Partition(const Graph& graph,
                                      int64_t num_partitions,
                                      const PartitionOptions& options = {});

// Replaces Concat(Slice(a, [k:n]), Slice(a, [0:k])) along one dim with
// Rotate(a, k) and Slice(Pad(x)) along one dim with Shift(x), then removes
// dead code. New instructions inherit the replaced instruction's sharding.
Graph DetectAndRotate(const Graph& graph);

}  // namespace shardlab

#endif  // SHARDLAB_PARTITIONER_PARTITIONER_H_
