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

#ifndef SHARDLAB_IR_GRAPH_H_
#define SHARDLAB_IR_GRAPH_H_

#include <cstdint>
#include <optional>
#include <string>
#include "absl/strings/string_view.h"
#include <utility>
#include <vector>

#include "shardlab/ir/shape.h"
#include "shardlab/ir/tensor.h"
#include "shardlab/sharding/sharding.h"

namespace shardlab {

enum class Opcode {
  kParameter,
  kConstant,
  kIota,
  kPartitionId,
  // Elementwise unary.
  kNegate,
  kExp,
  kRelu,
  kConvert,
  // Elementwise binary.
  kAdd,
  kMultiply,
  kMaximum,
  kSubtract,
  kDivide,
  kCompare,
  kSelect,
  // Data formatting.
  kBroadcast,
  kReshape,
  kTranspose,
  kReverse,
  kPad,
  kSlice,
  kDynamicSlice,
  kDynamicUpdateSlice,
  kConcatenate,
  // Partitioner-internal data movement created by rotate/shift detection.
  kRotate,
  kShift,
  // Compute.
  kReduce,
  kDot,
  kConvolution,
  // Collectives (only in partitioned programs).
  kAllReduce,
  kAllGather,
  kReduceScatter,
  kAllToAll,
  kCollectivePermute,
};

absl::string_view OpcodeName(Opcode opcode);
std::optional<Opcode> ParseOpcode(absl::string_view name);
bool IsElementwise(Opcode opcode);
bool IsElementwiseUnary(Opcode opcode);
bool IsElementwiseBinary(Opcode opcode);
bool IsCollective(Opcode opcode);

enum class ComparisonDirection { kEq, kNe, kLt, kLe, kGt, kGe };
absl::string_view DirectionName(ComparisonDirection d);
std::optional<ComparisonDirection> ParseDirection(absl::string_view name);

enum class ReduceKind { kSum, kMax, kMin, kProd };
absl::string_view ReduceKindName(ReduceKind k);
std::optional<ReduceKind> ParseReduceKind(absl::string_view name);
// Identity element: 0, lowest, highest, 1.
double ReduceIdentity(ReduceKind kind, DType dtype);
double ApplyReduce(ReduceKind kind, double a, double b);

struct PaddingDim {
  int64_t low = 0;
  int64_t high = 0;
  int64_t interior = 0;
  bool operator==(const PaddingDim&) const = default;
};

struct SliceDim {
  int64_t start = 0;
  int64_t limit = 0;
  int64_t stride = 1;
  bool operator==(const SliceDim&) const = default;
};

// Dot (generalized einsum) dimension numbers.
struct DotDims {
  std::vector<int64_t> lhs_batch;
  std::vector<int64_t> rhs_batch;
  std::vector<int64_t> lhs_contracting;
  std::vector<int64_t> rhs_contracting;
  bool operator==(const DotDims&) const = default;
};

// Per spatial dimension window configuration. `base_dilation` inserts
// holes between LHS elements and is applied before low/high padding.
struct WindowDim {
  int64_t size = 1;
  int64_t stride = 1;
  int64_t padding_low = 0;
  int64_t padding_high = 0;
  int64_t base_dilation = 1;
  int64_t window_dilation = 1;
  bool operator==(const WindowDim&) const = default;
};

// Output size of one windowed dimension; <= 0 when no window fits.
int64_t WindowedOutputSize(int64_t input_size, const WindowDim& w);

struct ConvDims {
  int64_t lhs_batch = 0;
  int64_t lhs_feature = 1;
  std::vector<int64_t> lhs_spatial;
  int64_t rhs_input_feature = 0;
  int64_t rhs_output_feature = 1;
  std::vector<int64_t> rhs_spatial;
  int64_t out_batch = 0;
  int64_t out_feature = 1;
  std::vector<int64_t> out_spatial;
  bool operator==(const ConvDims&) const = default;
};

// Opcode-specific attributes. Only the fields relevant to an opcode are
// meaningful; the rest keep their defaults so that equality is structural.
struct Attrs {
  int64_t parameter_index = 0;
  std::optional<Tensor> literal;
  // Iota, Concatenate, AllGather, ReduceScatter, Rotate, Shift dimension.
  int64_t dimension = 0;
  // Rotate/Shift element count.
  int64_t amount = 0;
  ComparisonDirection direction = ComparisonDirection::kEq;
  // Broadcast dims, Transpose permutation, Reverse/Reduce dims,
  // DynamicSlice sizes.
  std::vector<int64_t> dims;
  std::vector<PaddingDim> padding;
  std::vector<SliceDim> slice;
  ReduceKind reduce_kind = ReduceKind::kSum;
  DotDims dot;
  ConvDims conv;
  std::vector<WindowDim> window;
  std::vector<std::vector<int64_t>> replica_groups;
  std::vector<std::pair<int64_t, int64_t>> source_target_pairs;
  int64_t split_dimension = 0;
  int64_t concat_dimension = 0;

  bool operator==(const Attrs&) const = default;
};

struct Instruction {
  std::string name;
  Opcode opcode = Opcode::kParameter;
  // Indices into Graph::instructions.
  std::vector<int64_t> operands;
  Attrs attrs;
  Shape shape;
  std::optional<Sharding> sharding;
  // 1-based line in the text it was parsed from (0 if built in memory).
  int64_t source_line = 0;

  // Structural equality; source_line is ignored.
  bool operator==(const Instruction& other) const;
};

// SSA dataflow graph; instructions are stored in topological order.
struct Graph {
  std::string name = "main";
  std::optional<DeviceMesh> mesh;
  std::vector<Instruction> instructions;
  std::vector<int64_t> outputs;

  const Instruction& instr(int64_t i) const { return instructions[i]; }
  int64_t size() const { return instructions.size(); }
  std::optional<int64_t> FindByName(absl::string_view name) const;
  // Parameter instruction indices ordered by parameter index.
  std::vector<int64_t> Parameters() const;
  // users[i] = instructions that consume instruction i, in order.
  std::vector<std::vector<int64_t>> Users() const;

  bool operator==(const Graph& other) const = default;
};

// Removes instructions that do not contribute to outputs (parameters are
// kept) and renumbers operands.
Graph RemoveDeadCode(const Graph& graph);

}  // namespace shardlab

#endif  // SHARDLAB_IR_GRAPH_H_
