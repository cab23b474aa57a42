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

#ifndef SHARDLAB_SIMULATOR_SPMD_EXECUTOR_H_
#define SHARDLAB_SIMULATOR_SPMD_EXECUTOR_H_

#include <cstdint>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/types/span.h"
#include "shardlab/ir/graph.h"
#include "shardlab/partitioner/spmd_program.h"
#include "shardlab/sharding/shard_data.h"

namespace shardlab {

// Runs `program` on every device in lockstep. inputs[p] holds parameter p
// for each device. Returns one DeviceTensors per graph output.
//
// Collective semantics (groups are lists of device ids):
//   AllReduce       elementwise reduction in group order
//   AllGather       concatenation in group order
//   ReduceScatter   AllReduce, then member k keeps piece k
//   AllToAll        piece k of member j is sent to member k, which
//                   concatenates what it receives in member order
//   CollectivePermute  target receives its source's value; devices that are
//                   no target receive zeros
// Groups that do not partition the device set fail with SubgroupMismatch.
absl::StatusOr<std::vector<DeviceTensors>> EvaluateSpmd(
    const Graph& program, absl::Span<const int64_t> devices,
    absl::Span<const DeviceTensors> inputs);

absl::StatusOr<std::vector<DeviceTensors>> EvaluateSpmd(
    const SpmdProgram& program, absl::Span<const DeviceTensors> inputs);

}  // namespace shardlab

#endif  // SHARDLAB_SIMULATOR_SPMD_EXECUTOR_H_
