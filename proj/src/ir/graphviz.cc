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

#include "shardlab/ir/graphviz.h"

#include <set>

#include "absl/strings/str_cat.h"
#include "absl/strings/str_replace.h"

namespace shardlab {
namespace {

std::string Escape(absl::string_view s) {
  return absl::StrReplaceAll(s, {{"\\", "\\\\"}, {"\"", "\\\""}});
}

}  // namespace

std::string GraphToDot(const Graph& graph) {
  const std::set<int64_t> outputs(graph.outputs.begin(), graph.outputs.end());
  std::string out = absl::StrCat("digraph \"", Escape(graph.name), "\" {\n",
                                 "  node [shape=box, fontname=monospace];\n");
  for (int64_t i = 0; i < graph.size(); ++i) {
    const Instruction& instr = graph.instr(i);
    std::string label = absl::StrCat(instr.name, "\\n", OpcodeName(instr.opcode),
                                     " ", Escape(instr.shape.ToString()));
    if (instr.sharding.has_value()) {
      absl::StrAppend(&label, "\\n", Escape(instr.sharding->ToString()));
    }
    absl::StrAppend(&out, "  n", i, " [label=\"", label, "\"");
    if (IsCollective(instr.opcode)) {
      absl::StrAppend(&out, ", style=filled, fillcolor=\"#f4a261\"");
    }
    if (outputs.count(i)) absl::StrAppend(&out, ", peripheries=2");
    absl::StrAppend(&out, "];\n");
  }
  for (int64_t i = 0; i < graph.size(); ++i) {
    for (int64_t o : graph.instr(i).operands) {
      absl::StrAppend(&out, "  n", o, " -> n", i, ";\n");
    }
  }
  absl::StrAppend(&out, "}\n");
  return out;
}

}  // namespace shardlab
