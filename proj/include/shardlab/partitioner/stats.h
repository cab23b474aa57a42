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

#ifndef SHARDLAB_PARTITIONER_STATS_H_
#define SHARDLAB_PARTITIONER_STATS_H_

#include <cstdint>
#include <map>
#include <string>

#include "shardlab/ir/graph.h"

namespace shardlab {

// Collective counts and estimated traffic of a partitioned program. Bytes
// follow ring algorithms: per device, AllGather sends (g-1) shards,
// ReduceScatter and AllToAll (g-1)/g of the operand, AllReduce 2(g-1)/g,
// CollectivePermute one operand per pair.
struct CollectiveStats {
  std::map<std::string, int64_t> counts;  // keyed by opcode name
  std::map<std::string, double> bytes;
  int64_t total_count = 0;
  double total_bytes = 0;

  int64_t count(Opcode opcode) const;
};

CollectiveStats ComputeCollectiveStats(const Graph& graph);
std::string CollectiveStatsJson(const CollectiveStats& stats);

}  // namespace shardlab

#endif  // SHARDLAB_PARTITIONER_STATS_H_
