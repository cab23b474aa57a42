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

#include "shardlab/ir/builder.h"

#include "absl/strings/str_cat.h"
#include "shardlab/ir/shape_inference.h"

namespace shardlab {

namespace {

const Shape& EmptyShape() {
  static const Shape* shape = new Shape();
  return *shape;
}

}  // namespace

GraphBuilder::GraphBuilder(std::string name) { graph_.name = std::move(name); }

GraphBuilder::GraphBuilder(Graph graph) : graph_(std::move(graph)) {
  for (const Instruction& instr : graph_.instructions) {
    names_.insert(instr.name);
  }
}

std::string GraphBuilder::UniqueName(absl::string_view hint) {
  std::string base(hint);
  if (!names_.count(base)) {
    names_.insert(base);
    return base;
  }
  for (int64_t k = graph_.size();; ++k) {
    std::string candidate = absl::StrCat(base, ".", k);
    if (!names_.count(candidate)) {
      names_.insert(candidate);
      return candidate;
    }
  }
}

bool GraphBuilder::CheckOperands(absl::Span<const int64_t> ids) {
  if (!status_.ok()) return false;
  for (int64_t id : ids) {
    if (id < 0 || id >= graph_.size()) {
      status_ = absl::InvalidArgumentError(
          absl::StrCat("GraphBuilder: invalid operand id ", id));
      return false;
    }
  }
  return true;
}

int64_t GraphBuilder::AddInstruction(Instruction instr,
                                     bool has_declared_shape) {
  if (!CheckOperands(instr.operands)) return -1;
  std::vector<Shape> operand_shapes;
  operand_shapes.reserve(instr.operands.size());
  for (int64_t op : instr.operands) operand_shapes.push_back(shape(op));
  std::optional<Shape> declared;
  if (has_declared_shape) declared = instr.shape;
  absl::StatusOr<Shape> inferred =
      InferShape(instr.opcode, operand_shapes, instr.attrs, declared);
  if (!inferred.ok()) {
    status_ = inferred.status();
    return -1;
  }
  instr.shape = *std::move(inferred);
  instr.name = UniqueName(instr.name.empty() ? std::string(OpcodeName(instr.opcode))
                                             : instr.name);
  graph_.instructions.push_back(std::move(instr));
  return graph_.size() - 1;
}

const Shape& GraphBuilder::shape(int64_t id) const {
  if (id < 0 || id >= graph_.size()) return EmptyShape();
  return graph_.instr(id).shape;
}

void GraphBuilder::SetSharding(int64_t id, Sharding sharding) {
  if (id >= 0 && id < graph_.size()) {
    graph_.instructions[id].sharding = std::move(sharding);
  }
}

void GraphBuilder::SetName(int64_t id, std::string name) {
  if (id < 0 || id >= graph_.size()) return;
  names_.erase(graph_.instructions[id].name);
  graph_.instructions[id].name = UniqueName(name);
}

GraphBuilder::Checkpoint GraphBuilder::MakeCheckpoint() const {
  return Checkpoint{graph_.size(), status_.ok()};
}

void GraphBuilder::Rollback(const Checkpoint& checkpoint) {
  while (graph_.size() > checkpoint.size) {
    names_.erase(graph_.instructions.back().name);
    graph_.instructions.pop_back();
  }
  if (checkpoint.was_ok) status_ = absl::OkStatus();
}

absl::StatusOr<Graph> GraphBuilder::Build(std::vector<int64_t> outputs) {
  if (!CheckOperands(outputs)) return status_;
  graph_.outputs = std::move(outputs);
  return graph_;
}

int64_t GraphBuilder::Parameter(int64_t index, Shape shape, std::string name) {
  Instruction instr;
  instr.opcode = Opcode::kParameter;
  instr.attrs.parameter_index = index;
  instr.shape = std::move(shape);
  instr.name = name.empty() ? absl::StrCat("p", index) : std::move(name);
  return AddInstruction(std::move(instr), true);
}

int64_t GraphBuilder::Constant(Tensor literal, std::string name) {
  Instruction instr;
  instr.opcode = Opcode::kConstant;
  instr.attrs.literal = std::move(literal);
  instr.name = std::move(name);
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::ScalarConstant(DType dtype, double value) {
  return Constant(Tensor::Scalar(dtype, value));
}

int64_t GraphBuilder::S32Table(absl::Span<const int64_t> values) {
  std::vector<double> data(values.begin(), values.end());
  return Constant(
      Tensor(Shape(DType::kS32, {static_cast<int64_t>(values.size())}), data),
      "table");
}

int64_t GraphBuilder::Iota(Shape shape, int64_t dimension) {
  Instruction instr;
  instr.opcode = Opcode::kIota;
  instr.attrs.dimension = dimension;
  instr.shape = std::move(shape);
  return AddInstruction(std::move(instr), true);
}

int64_t GraphBuilder::PartitionId() {
  Instruction instr;
  instr.opcode = Opcode::kPartitionId;
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Unary(Opcode opcode, int64_t x) {
  Instruction instr;
  instr.opcode = opcode;
  instr.operands = {x};
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Convert(int64_t x, DType dtype) {
  if (!CheckOperands({x})) return -1;
  if (shape(x).dtype == dtype) return x;
  Instruction instr;
  instr.opcode = Opcode::kConvert;
  instr.operands = {x};
  instr.shape = shape(x).WithDType(dtype);
  return AddInstruction(std::move(instr), true);
}

int64_t GraphBuilder::Binary(Opcode opcode, int64_t a, int64_t b) {
  Instruction instr;
  instr.opcode = opcode;
  instr.operands = {a, b};
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Compare(int64_t a, int64_t b,
                              ComparisonDirection direction) {
  Instruction instr;
  instr.opcode = Opcode::kCompare;
  instr.operands = {a, b};
  instr.attrs.direction = direction;
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Select(int64_t pred, int64_t on_true, int64_t on_false) {
  Instruction instr;
  instr.opcode = Opcode::kSelect;
  instr.operands = {pred, on_true, on_false};
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Broadcast(int64_t x, std::vector<int64_t> out_dims,
                                std::vector<int64_t> broadcast_dims) {
  if (!CheckOperands({x})) return -1;
  Instruction instr;
  instr.opcode = Opcode::kBroadcast;
  instr.operands = {x};
  instr.attrs.dims = std::move(broadcast_dims);
  instr.shape = Shape(shape(x).dtype, std::move(out_dims));
  return AddInstruction(std::move(instr), true);
}

int64_t GraphBuilder::BroadcastScalar(int64_t scalar,
                                      std::vector<int64_t> out_dims) {
  return Broadcast(scalar, std::move(out_dims), {});
}

int64_t GraphBuilder::Reshape(int64_t x, std::vector<int64_t> dims) {
  if (!CheckOperands({x})) return -1;
  if (shape(x).dims == dims) return x;
  Instruction instr;
  instr.opcode = Opcode::kReshape;
  instr.operands = {x};
  instr.shape = Shape(shape(x).dtype, std::move(dims));
  return AddInstruction(std::move(instr), true);
}

int64_t GraphBuilder::Transpose(int64_t x, std::vector<int64_t> permutation) {
  Instruction instr;
  instr.opcode = Opcode::kTranspose;
  instr.operands = {x};
  instr.attrs.dims = std::move(permutation);
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Reverse(int64_t x, std::vector<int64_t> dims) {
  Instruction instr;
  instr.opcode = Opcode::kReverse;
  instr.operands = {x};
  instr.attrs.dims = std::move(dims);
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Pad(int64_t x, int64_t pad_value,
                          std::vector<PaddingDim> padding) {
  Instruction instr;
  instr.opcode = Opcode::kPad;
  instr.operands = {x, pad_value};
  instr.attrs.padding = std::move(padding);
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Slice(int64_t x, std::vector<SliceDim> slice) {
  Instruction instr;
  instr.opcode = Opcode::kSlice;
  instr.operands = {x};
  instr.attrs.slice = std::move(slice);
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::SliceInDim(int64_t x, int64_t dim, int64_t start,
                                 int64_t limit) {
  if (!CheckOperands({x})) return -1;
  const Shape& s = shape(x);
  if (start == 0 && limit == s.dims[dim]) return x;
  std::vector<SliceDim> slice(s.rank());
  for (int64_t i = 0; i < s.rank(); ++i) slice[i] = {0, s.dims[i], 1};
  slice[dim] = {start, limit, 1};
  return Slice(x, std::move(slice));
}

int64_t GraphBuilder::DynamicSlice(int64_t x, std::vector<int64_t> starts,
                                   std::vector<int64_t> sizes) {
  Instruction instr;
  instr.opcode = Opcode::kDynamicSlice;
  instr.operands = {x};
  instr.operands.insert(instr.operands.end(), starts.begin(), starts.end());
  instr.attrs.dims = std::move(sizes);
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::DynamicUpdateSlice(int64_t x, int64_t update,
                                         std::vector<int64_t> starts) {
  Instruction instr;
  instr.opcode = Opcode::kDynamicUpdateSlice;
  instr.operands = {x, update};
  instr.operands.insert(instr.operands.end(), starts.begin(), starts.end());
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Concatenate(std::vector<int64_t> operands,
                                  int64_t dimension) {
  if (operands.size() == 1) return operands[0];
  Instruction instr;
  instr.opcode = Opcode::kConcatenate;
  instr.operands = std::move(operands);
  instr.attrs.dimension = dimension;
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Rotate(int64_t x, int64_t dimension, int64_t amount) {
  Instruction instr;
  instr.opcode = Opcode::kRotate;
  instr.operands = {x};
  instr.attrs.dimension = dimension;
  instr.attrs.amount = amount;
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Shift(int64_t x, int64_t fill, int64_t dimension,
                            int64_t amount) {
  Instruction instr;
  instr.opcode = Opcode::kShift;
  instr.operands = {x, fill};
  instr.attrs.dimension = dimension;
  instr.attrs.amount = amount;
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Reduce(int64_t x, int64_t init, std::vector<int64_t> dims,
                             ReduceKind kind) {
  Instruction instr;
  instr.opcode = Opcode::kReduce;
  instr.operands = {x, init};
  instr.attrs.dims = std::move(dims);
  instr.attrs.reduce_kind = kind;
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Dot(int64_t lhs, int64_t rhs, DotDims dims) {
  Instruction instr;
  instr.opcode = Opcode::kDot;
  instr.operands = {lhs, rhs};
  instr.attrs.dot = std::move(dims);
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::Convolution(int64_t lhs, int64_t rhs, ConvDims dims,
                                  std::vector<WindowDim> window) {
  Instruction instr;
  instr.opcode = Opcode::kConvolution;
  instr.operands = {lhs, rhs};
  instr.attrs.conv = std::move(dims);
  instr.attrs.window = std::move(window);
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::AllReduce(int64_t x, ReduceKind kind,
                                std::vector<std::vector<int64_t>> groups) {
  Instruction instr;
  instr.opcode = Opcode::kAllReduce;
  instr.operands = {x};
  instr.attrs.reduce_kind = kind;
  instr.attrs.replica_groups = std::move(groups);
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::AllGather(int64_t x, int64_t dimension,
                                std::vector<std::vector<int64_t>> groups) {
  Instruction instr;
  instr.opcode = Opcode::kAllGather;
  instr.operands = {x};
  instr.attrs.dimension = dimension;
  instr.attrs.replica_groups = std::move(groups);
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::ReduceScatter(int64_t x, ReduceKind kind,
                                    int64_t dimension,
                                    std::vector<std::vector<int64_t>> groups) {
  Instruction instr;
  instr.opcode = Opcode::kReduceScatter;
  instr.operands = {x};
  instr.attrs.reduce_kind = kind;
  instr.attrs.dimension = dimension;
  instr.attrs.replica_groups = std::move(groups);
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::AllToAll(int64_t x, int64_t split_dimension,
                               int64_t concat_dimension,
                               std::vector<std::vector<int64_t>> groups) {
  Instruction instr;
  instr.opcode = Opcode::kAllToAll;
  instr.operands = {x};
  instr.attrs.split_dimension = split_dimension;
  instr.attrs.concat_dimension = concat_dimension;
  instr.attrs.replica_groups = std::move(groups);
  return AddInstruction(std::move(instr));
}

int64_t GraphBuilder::CollectivePermute(
    int64_t x, std::vector<std::pair<int64_t, int64_t>> pairs) {
  Instruction instr;
  instr.opcode = Opcode::kCollectivePermute;
  instr.operands = {x};
  instr.attrs.source_target_pairs = std::move(pairs);
  return AddInstruction(std::move(instr));
}

}  // namespace shardlab
