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

#include "shardlab/partitioner/stats.h"

#include "json.hpp"
#include "src/partitioner/spmd_partitioner.h"

namespace shardlab {

int64_t CollectiveStats::count(Opcode opcode) const {
  auto it = counts.find(std::string(OpcodeName(opcode)));
  return it == counts.end() ? 0 : it->second;
}

CollectiveStats ComputeCollectiveStats(const Graph& graph) {
  CollectiveStats stats;
  for (const Instruction& instr : graph.instructions) {
    if (!IsCollective(instr.opcode)) continue;
    const std::string name(OpcodeName(instr.opcode));
    int64_t participants = instr.attrs.source_target_pairs.size();
    if (instr.opcode != Opcode::kCollectivePermute) {
      participants = 0;
      for (const auto& g : instr.attrs.replica_groups) participants += g.size();
    }
    const double bytes = spmd::CollectiveCost(graph, instr) * participants;
    ++stats.counts[name];
    stats.bytes[name] += bytes;
    ++stats.total_count;
    stats.total_bytes += bytes;
  }
  return stats;
}

std::string CollectiveStatsJson(const CollectiveStats& stats) {
  nlohmann::json j;
  j["counts"] = stats.counts;
  j["bytes"] = stats.bytes;
  j["total_count"] = stats.total_count;
  j["total_bytes"] = stats.total_bytes;
  return j.dump(2);
}

}  // namespace shardlab
