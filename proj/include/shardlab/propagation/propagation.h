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

#ifndef SHARDLAB_PROPAGATION_PROPAGATION_H_
#define SHARDLAB_PROPAGATION_PROPAGATION_H_

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/statusor.h"
#include "shardlab/ir/graph.h"
#include "shardlab/propagation/rules.h"
#include "shardlab/sharding/sharding.h"

namespace shardlab {

struct PropagationOptions {
  // When false every rule fires in every sweep (tiers ignored).
  bool use_priorities = true;
  // Sweep cap; 0 means 10 x graph size.
  int64_t max_iterations = 0;
};

struct ShardingChange {
  int64_t iteration = 0;
  int64_t instruction = 0;
  std::optional<Sharding> old_sharding;
  Sharding new_sharding;
  // Opcode of the instruction whose rule produced the candidate.
  std::string rule;
  Direction direction = Direction::kForward;
  int tier = 0;
};

struct PropagationReport {
  // Forward+backward sweep pairs run, including the final quiet one.
  int64_t iterations = 0;
  // Sweeps that changed something, plus the final quiet sweep.
  int64_t effective_iterations = 0;
  std::vector<Sharding> final_shardings;
  std::vector<ShardingChange> changes;
  bool hit_iteration_cap = false;
  std::vector<std::string> diagnostics;
};

// Completes shardings over the graph. User annotations are kept except on
// their unspecified dims; unannotated values that nothing reaches end up
// replicated.
absl::StatusOr<std::pair<Graph, PropagationReport>> Propagate(
    const Graph& graph, const PropagationOptions& options = {});

// JSON change log (for `propagate --trace`).
std::string PropagationTraceJson(const Graph& graph,
                                 const PropagationReport& report);

}  // namespace shardlab

#endif  // SHARDLAB_PROPAGATION_PROPAGATION_H_
