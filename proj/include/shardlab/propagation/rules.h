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

#ifndef SHARDLAB_PROPAGATION_RULES_H_
#define SHARDLAB_PROPAGATION_RULES_H_

#include <cstdint>
#include <optional>
#include <vector>

#include "absl/types/span.h"
#include "shardlab/ir/graph.h"
#include "shardlab/sharding/sharding.h"

namespace shardlab {

enum class Direction { kForward, kBackward };

// Priority tier of the rule for `opcode` in `direction`; 0 fires first.
// nullopt when the op has no rule in that direction.
std::optional<int> RuleTier(Opcode opcode, Direction direction);
inline constexpr int kNumTiers = 5;

// Result sharding candidate from the operands' current shardings (nullopt
// entries are unknown). Only dims the op preserves carry sharding.
std::optional<Sharding> InferForward(
    const Graph& graph, int64_t id,
    absl::Span<const std::optional<Sharding>> operand_shardings);

// Candidate for operand `operand_index` given the result's sharding.
std::optional<Sharding> InferBackward(const Graph& graph, int64_t id,
                                      const Sharding& result,
                                      int64_t operand_index);

// Maps a sharding across a reshape by splitting both shapes into minimal
// groups of dims with equal element counts. Groups whose tiling is not a
// contiguous major-to-minor split of the group are left unsharded.
Sharding ReshapeSharding(const Sharding& sharding, absl::Span<const int64_t> from,
                         absl::Span<const int64_t> to);

}  // namespace shardlab

#endif  // SHARDLAB_PROPAGATION_RULES_H_
