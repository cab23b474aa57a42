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

#ifndef SHARDLAB_IR_VERIFIER_H_
#define SHARDLAB_IR_VERIFIER_H_

#include <string>
#include <vector>

#include "absl/status/status.h"
#include "shardlab/ir/graph.h"

namespace shardlab {

struct Diagnostic {
  int64_t instruction = -1;  // -1 for graph-level diagnostics
  std::string name;
  int64_t line = 0;
  // One of: "use-before-def", "duplicate-name", "arity", "shape mismatch",
  // "parameter-index", "sharding", "output-undefined", "mesh".
  std::string rule;
  std::string message;

  std::string ToString() const;
};

// Empty iff the graph satisfies every structural invariant.
std::vector<Diagnostic> ValidateGraph(const Graph& graph);

// OK, or InvalidArgument carrying the first diagnostic.
absl::Status ValidateGraphStatus(const Graph& graph);

// Appends "[at %name #id line L]" to a failed status.
absl::Status WithProvenance(const absl::Status& status, const Graph& graph,
                            int64_t id);

}  // namespace shardlab

#endif  // SHARDLAB_IR_VERIFIER_H_
