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

#ifndef SHARDLAB_PARTITIONER_SPMD_PROGRAM_H_
#define SHARDLAB_PARTITIONER_SPMD_PROGRAM_H_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "shardlab/ir/graph.h"
#include "shardlab/sharding/sharding.h"

namespace shardlab {

// Per-partition halo sizes of one exchange along one dimension. Each side
// is recorded per partition coordinate and, when it fits, as a linear form
// halo(i) = (a * i + b) / c with floor division.
struct HaloSpec {
  struct Linear {
    int64_t a = 0;
    int64_t b = 0;
    int64_t c = 1;
    bool operator==(const Linear&) const = default;
  };
  std::string instruction;
  int64_t dim = 0;
  std::vector<int64_t> left;
  std::vector<int64_t> right;
  std::optional<Linear> left_form;
  std::optional<Linear> right_form;
  int64_t max_left = 0;
  int64_t max_right = 0;
  bool masked = false;
};

// A single per-device program. Every device runs `graph`; only PartitionId
// (which evaluates to the device id) differs between them.
struct SpmdProgram {
  Graph graph;
  int64_t num_partitions = 1;
  std::vector<int64_t> devices;
  // Full (unsharded) parameter and output shapes with their shardings.
  std::vector<Shape> input_shapes;
  std::vector<Sharding> input_shardings;
  std::vector<Shape> output_shapes;
  std::vector<Sharding> output_shardings;
  // lowered[i] = [begin, end) range of partitioned instructions emitted for
  // original instruction i.
  std::vector<std::pair<int64_t, int64_t>> lowered;
  // Halo exchanges emitted, in order.
  std::vector<HaloSpec> halos;
};

}  // namespace shardlab

#endif  // SHARDLAB_PARTITIONER_SPMD_PROGRAM_H_
