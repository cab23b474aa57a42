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

// Textual IR.
//
//   graph @name (mesh=[2,2]) {
//     %x = f32[8,4] parameter(0), sharding={devices=[2,1,2]0,1,2,3 last_tile_dim_replicate}
//     %w = f32[4,4] parameter(1), sharding={mesh_split=[-1,1]}
//     %y = f32[8,4] dot(%x, %w), lhs_contracting_dims={1}, rhs_contracting_dims={0}
//     return %y
//   }
//
// `mesh_split=[..]` is accepted as input sugar and printed as an explicit
// tile assignment. Lines starting with `//` are comments.

#ifndef SHARDLAB_IR_TEXT_H_
#define SHARDLAB_IR_TEXT_H_

#include <string>
#include "absl/strings/string_view.h"

#include "absl/status/statusor.h"
#include "shardlab/ir/graph.h"

namespace shardlab {

std::string PrintGraph(const Graph& graph);
std::string PrintInstruction(const Graph& graph, int64_t id);

// Parses without running the verifier. Errors carry "ParseError: line L,
// column C: ..." messages.
absl::StatusOr<Graph> ParseGraph(absl::string_view text);

// ParseGraph followed by ValidateGraph.
absl::StatusOr<Graph> ParseAndValidateGraph(absl::string_view text);

}  // namespace shardlab

#endif  // SHARDLAB_IR_TEXT_H_
