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

#include "shardlab/ir/verifier.h"

#include <set>

#include "absl/strings/str_cat.h"
#include "shardlab/ir/shape_inference.h"

namespace shardlab {

std::string Diagnostic::ToString() const {
  std::string where =
      instruction < 0 ? "graph" : absl::StrCat("%", name, " (#", instruction, ")");
  if (line > 0) absl::StrAppend(&where, " line ", line);
  return absl::StrCat(where, ": ", rule, ": ", message);
}

std::vector<Diagnostic> ValidateGraph(const Graph& graph) {
  std::vector<Diagnostic> diags;
  auto report = [&](int64_t i, std::string rule, std::string message) {
    Diagnostic d;
    d.instruction = i;
    if (i >= 0) {
      d.name = graph.instr(i).name;
      d.line = graph.instr(i).source_line;
    }
    d.rule = std::move(rule);
    d.message = std::move(message);
    diags.push_back(std::move(d));
  };

  if (graph.mesh.has_value()) {
    if (absl::Status s = graph.mesh->Validate(); !s.ok()) {
      report(-1, "mesh", std::string(s.message()));
    }
  }

  std::set<std::string> names;
  std::set<int64_t> param_indices;
  for (int64_t i = 0; i < graph.size(); ++i) {
    const Instruction& instr = graph.instr(i);
    if (!names.insert(instr.name).second) {
      report(i, "duplicate-name", absl::StrCat("name %", instr.name,
                                               " defined more than once"));
    }
    bool operands_ok = true;
    for (int64_t op : instr.operands) {
      if (op < 0 || op >= i) {
        report(i, "use-before-def",
               absl::StrCat("operand #", op, " is not defined before use"));
        operands_ok = false;
      }
    }
    if (instr.opcode == Opcode::kParameter &&
        !param_indices.insert(instr.attrs.parameter_index).second) {
      report(i, "parameter-index",
             absl::StrCat("parameter index ", instr.attrs.parameter_index,
                          " repeated"));
    }
    if (!operands_ok) continue;

    std::vector<Shape> shapes;
    for (int64_t op : instr.operands) shapes.push_back(graph.instr(op).shape);
    const std::optional<int64_t> arity = ExpectedArity(instr.opcode, shapes);
    if (arity.has_value() && *arity != static_cast<int64_t>(shapes.size())) {
      report(i, "arity",
             absl::StrCat(OpcodeName(instr.opcode), " expects ", *arity,
                          " operands, got ", shapes.size()));
      continue;
    }
    absl::StatusOr<Shape> inferred =
        InferShape(instr.opcode, shapes, instr.attrs, instr.shape);
    if (!inferred.ok()) {
      report(i, "shape mismatch", std::string(inferred.status().message()));
    } else if (*inferred != instr.shape) {
      report(i, "shape mismatch",
             absl::StrCat("declared ", instr.shape.ToString(), ", inferred ",
                          inferred->ToString()));
    }
    if (instr.sharding.has_value() && !instr.sharding->IsReplicated()) {
      const Sharding& s = *instr.sharding;
      if (s.data_rank() != instr.shape.rank()) {
        report(i, "sharding",
               absl::StrCat("RankMismatch: sharding rank ", s.data_rank(),
                            " vs shape rank ", instr.shape.rank()));
      } else if (graph.mesh.has_value()) {
        std::set<int64_t> mesh_ids(graph.mesh->device_ids.begin(),
                                   graph.mesh->device_ids.end());
        for (int64_t d : s.devices()) {
          if (!mesh_ids.count(d)) {
            report(i, "sharding",
                   absl::StrCat("device ", d, " is not in the mesh"));
            break;
          }
        }
      }
      for (int64_t d : s.unspecified_dims()) {
        if (d < 0 || d >= instr.shape.rank()) {
          report(i, "sharding",
                 absl::StrCat("unspecified dim ", d, " out of range"));
        }
      }
    }
  }
  if (graph.outputs.empty()) {
    report(-1, "output-undefined", "graph has no outputs");
  }
  for (int64_t o : graph.outputs) {
    if (o < 0 || o >= graph.size()) {
      report(-1, "output-undefined", absl::StrCat("output #", o, " undefined"));
    }
  }
  return diags;
}

absl::Status ValidateGraphStatus(const Graph& graph) {
  std::vector<Diagnostic> diags = ValidateGraph(graph);
  if (diags.empty()) return absl::OkStatus();
  return absl::InvalidArgumentError(
      absl::StrCat("ValidationError: ", diags[0].ToString()));
}

absl::Status WithProvenance(const absl::Status& status, const Graph& graph,
                            int64_t id) {
  if (status.ok()) return status;
  const Instruction& instr = graph.instr(id);
  std::string where = absl::StrCat(" [at %", instr.name, " #", id);
  if (instr.source_line > 0) absl::StrAppend(&where, " line ", instr.source_line);
  return absl::Status(status.code(), absl::StrCat(status.message(), where, "]"));
}

}  // namespace shardlab
