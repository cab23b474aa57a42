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

#include "shardlab/ir/graph.h"

#include <algorithm>
#include <array>
#include <limits>

namespace shardlab {

namespace {

struct OpcodeEntry {
  Opcode opcode;
  absl::string_view name;
};

constexpr std::array<OpcodeEntry, 34> kOpcodes = {{
    {Opcode::kParameter, "parameter"},
    {Opcode::kConstant, "constant"},
    {Opcode::kIota, "iota"},
    {Opcode::kPartitionId, "partition-id"},
    {Opcode::kNegate, "negate"},
    {Opcode::kExp, "exponential"},
    {Opcode::kRelu, "relu"},
    {Opcode::kConvert, "convert"},
    {Opcode::kAdd, "add"},
    {Opcode::kMultiply, "multiply"},
    {Opcode::kMaximum, "maximum"},
    {Opcode::kSubtract, "subtract"},
    {Opcode::kDivide, "divide"},
    {Opcode::kCompare, "compare"},
    {Opcode::kSelect, "select"},
    {Opcode::kBroadcast, "broadcast"},
    {Opcode::kReshape, "reshape"},
    {Opcode::kTranspose, "transpose"},
    {Opcode::kReverse, "reverse"},
    {Opcode::kPad, "pad"},
    {Opcode::kSlice, "slice"},
    {Opcode::kDynamicSlice, "dynamic-slice"},
    {Opcode::kDynamicUpdateSlice, "dynamic-update-slice"},
    {Opcode::kConcatenate, "concatenate"},
    {Opcode::kRotate, "rotate"},
    {Opcode::kShift, "shift"},
    {Opcode::kReduce, "reduce"},
    {Opcode::kDot, "dot"},
    {Opcode::kConvolution, "convolution"},
    {Opcode::kAllReduce, "all-reduce"},
    {Opcode::kAllGather, "all-gather"},
    {Opcode::kReduceScatter, "reduce-scatter"},
    {Opcode::kAllToAll, "all-to-all"},
    {Opcode::kCollectivePermute, "collective-permute"},
}};

}  // namespace

absl::string_view OpcodeName(Opcode opcode) {
  for (const auto& e : kOpcodes) {
    if (e.opcode == opcode) return e.name;
  }
  return "unknown";
}

std::optional<Opcode> ParseOpcode(absl::string_view name) {
  for (const auto& e : kOpcodes) {
    if (e.name == name) return e.opcode;
  }
  return std::nullopt;
}

bool IsElementwiseUnary(Opcode opcode) {
  return opcode == Opcode::kNegate || opcode == Opcode::kExp ||
         opcode == Opcode::kRelu || opcode == Opcode::kConvert;
}

bool IsElementwiseBinary(Opcode opcode) {
  switch (opcode) {
    case Opcode::kAdd:
    case Opcode::kMultiply:
    case Opcode::kMaximum:
    case Opcode::kSubtract:
    case Opcode::kDivide:
    case Opcode::kCompare:
      return true;
    default:
      return false;
  }
}

bool IsElementwise(Opcode opcode) {
  return IsElementwiseUnary(opcode) || IsElementwiseBinary(opcode) ||
         opcode == Opcode::kSelect;
}

bool IsCollective(Opcode opcode) {
  switch (opcode) {
    case Opcode::kAllReduce:
    case Opcode::kAllGather:
    case Opcode::kReduceScatter:
    case Opcode::kAllToAll:
    case Opcode::kCollectivePermute:
      return true;
    default:
      return false;
  }
}

absl::string_view DirectionName(ComparisonDirection d) {
  switch (d) {
    case ComparisonDirection::kEq:
      return "EQ";
    case ComparisonDirection::kNe:
      return "NE";
    case ComparisonDirection::kLt:
      return "LT";
    case ComparisonDirection::kLe:
      return "LE";
    case ComparisonDirection::kGt:
      return "GT";
    case ComparisonDirection::kGe:
      return "GE";
  }
  return "?";
}

std::optional<ComparisonDirection> ParseDirection(absl::string_view name) {
  for (auto d : {ComparisonDirection::kEq, ComparisonDirection::kNe,
                 ComparisonDirection::kLt, ComparisonDirection::kLe,
                 ComparisonDirection::kGt, ComparisonDirection::kGe}) {
    if (DirectionName(d) == name) return d;
  }
  return std::nullopt;
}

absl::string_view ReduceKindName(ReduceKind k) {
  switch (k) {
    case ReduceKind::kSum:
      return "sum";
    case ReduceKind::kMax:
      return "max";
    case ReduceKind::kMin:
      return "min";
    case ReduceKind::kProd:
      return "prod";
  }
  return "?";
}

std::optional<ReduceKind> ParseReduceKind(absl::string_view name) {
  for (auto k : {ReduceKind::kSum, ReduceKind::kMax, ReduceKind::kMin,
                 ReduceKind::kProd}) {
    if (ReduceKindName(k) == name) return k;
  }
  return std::nullopt;
}

double ReduceIdentity(ReduceKind kind, DType dtype) {
  switch (kind) {
    case ReduceKind::kSum:
      return 0.0;
    case ReduceKind::kProd:
      return 1.0;
    case ReduceKind::kMax:
      switch (dtype) {
        case DType::kF32:
          return -std::numeric_limits<double>::infinity();
        case DType::kS32:
          return std::numeric_limits<int32_t>::min();
        case DType::kU32:
        case DType::kPred:
          return 0.0;
      }
      break;
    case ReduceKind::kMin:
      switch (dtype) {
        case DType::kF32:
          return std::numeric_limits<double>::infinity();
        case DType::kS32:
          return std::numeric_limits<int32_t>::max();
        case DType::kU32:
          return std::numeric_limits<uint32_t>::max();
        case DType::kPred:
          return 1.0;
      }
      break;
  }
  return 0.0;
}

double ApplyReduce(ReduceKind kind, double a, double b) {
  switch (kind) {
    case ReduceKind::kSum:
      return a + b;
    case ReduceKind::kProd:
      return a * b;
    case ReduceKind::kMax:
      return std::max(a, b);
    case ReduceKind::kMin:
      return std::min(a, b);
  }
  return a;
}

int64_t WindowedOutputSize(int64_t input_size, const WindowDim& w) {
  const int64_t dilated =
      input_size == 0 ? 0 : (input_size - 1) * w.base_dilation + 1;
  const int64_t padded = dilated + w.padding_low + w.padding_high;
  const int64_t effective = (w.size - 1) * w.window_dilation + 1;
  if (padded < effective || w.stride < 1) return 0;
  return (padded - effective) / w.stride + 1;
}

bool Instruction::operator==(const Instruction& other) const {
  return name == other.name && opcode == other.opcode &&
         operands == other.operands && attrs == other.attrs &&
         shape == other.shape && sharding == other.sharding;
}

std::optional<int64_t> Graph::FindByName(absl::string_view n) const {
  for (int64_t i = 0; i < size(); ++i) {
    if (instructions[i].name == n) return i;
  }
  return std::nullopt;
}

std::vector<int64_t> Graph::Parameters() const {
  std::vector<int64_t> params;
  for (int64_t i = 0; i < size(); ++i) {
    if (instructions[i].opcode == Opcode::kParameter) params.push_back(i);
  }
  std::stable_sort(params.begin(), params.end(), [&](int64_t a, int64_t b) {
    return instructions[a].attrs.parameter_index <
           instructions[b].attrs.parameter_index;
  });
  return params;
}

std::vector<std::vector<int64_t>> Graph::Users() const {
  std::vector<std::vector<int64_t>> users(size());
  for (int64_t i = 0; i < size(); ++i) {
    for (int64_t op : instructions[i].operands) {
      if (op >= 0 && op < size() &&
          (users[op].empty() || users[op].back() != i)) {
        users[op].push_back(i);
      }
    }
  }
  return users;
}

Graph RemoveDeadCode(const Graph& graph) {
  std::vector<bool> live(graph.size(), false);
  for (int64_t o : graph.outputs) live[o] = true;
  for (int64_t i = graph.size() - 1; i >= 0; --i) {
    if (graph.instr(i).opcode == Opcode::kParameter) live[i] = true;
    if (!live[i]) continue;
    for (int64_t op : graph.instr(i).operands) live[op] = true;
  }
  Graph out;
  out.name = graph.name;
  out.mesh = graph.mesh;
  std::vector<int64_t> remap(graph.size(), -1);
  for (int64_t i = 0; i < graph.size(); ++i) {
    if (!live[i]) continue;
    Instruction instr = graph.instr(i);
    for (int64_t& op : instr.operands) op = remap[op];
    remap[i] = out.instructions.size();
    out.instructions.push_back(std::move(instr));
  }
  for (int64_t o : graph.outputs) out.outputs.push_back(remap[o]);
  return out;
}

}  // namespace shardlab
