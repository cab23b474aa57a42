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

#ifndef SHARDLAB_IR_BUILDER_H_
#define SHARDLAB_IR_BUILDER_H_

#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/types/span.h"
#include "shardlab/ir/graph.h"

namespace shardlab {

// Appends shape-checked instructions to a graph. The first failure is
// sticky: later calls return -1 and status() reports the original error.
class GraphBuilder {
 public:
  explicit GraphBuilder(std::string name = "main");
  explicit GraphBuilder(Graph graph);

  int64_t Parameter(int64_t index, Shape shape, std::string name = "");
  int64_t Constant(Tensor literal, std::string name = "");
  int64_t ScalarConstant(DType dtype, double value);
  int64_t S32Table(absl::Span<const int64_t> values);
  int64_t Iota(Shape shape, int64_t dimension);
  int64_t PartitionId();

  int64_t Unary(Opcode opcode, int64_t x);
  int64_t Convert(int64_t x, DType dtype);
  int64_t Binary(Opcode opcode, int64_t a, int64_t b);
  int64_t Add(int64_t a, int64_t b) { return Binary(Opcode::kAdd, a, b); }
  int64_t Sub(int64_t a, int64_t b) { return Binary(Opcode::kSubtract, a, b); }
  int64_t Mul(int64_t a, int64_t b) { return Binary(Opcode::kMultiply, a, b); }
  int64_t Compare(int64_t a, int64_t b, ComparisonDirection direction);
  int64_t Select(int64_t pred, int64_t on_true, int64_t on_false);

  int64_t Broadcast(int64_t x, std::vector<int64_t> out_dims,
                    std::vector<int64_t> broadcast_dims);
  // Broadcasts a scalar to `shape` dims (dtype of the scalar).
  int64_t BroadcastScalar(int64_t scalar, std::vector<int64_t> out_dims);
  int64_t Reshape(int64_t x, std::vector<int64_t> dims);
  int64_t Transpose(int64_t x, std::vector<int64_t> permutation);
  int64_t Reverse(int64_t x, std::vector<int64_t> dims);
  int64_t Pad(int64_t x, int64_t pad_value, std::vector<PaddingDim> padding);
  int64_t Slice(int64_t x, std::vector<SliceDim> slice);
  // Slice of one dimension, [start, limit).
  int64_t SliceInDim(int64_t x, int64_t dim, int64_t start, int64_t limit);
  int64_t DynamicSlice(int64_t x, std::vector<int64_t> starts,
                       std::vector<int64_t> sizes);
  int64_t DynamicUpdateSlice(int64_t x, int64_t update,
                             std::vector<int64_t> starts);
  int64_t Concatenate(std::vector<int64_t> operands, int64_t dimension);
  int64_t Rotate(int64_t x, int64_t dimension, int64_t amount);
  int64_t Shift(int64_t x, int64_t fill, int64_t dimension, int64_t amount);

  int64_t Reduce(int64_t x, int64_t init, std::vector<int64_t> dims,
                 ReduceKind kind);
  int64_t Dot(int64_t lhs, int64_t rhs, DotDims dims);
  int64_t Convolution(int64_t lhs, int64_t rhs, ConvDims dims,
                      std::vector<WindowDim> window);

  int64_t AllReduce(int64_t x, ReduceKind kind,
                    std::vector<std::vector<int64_t>> groups);
  int64_t AllGather(int64_t x, int64_t dimension,
                    std::vector<std::vector<int64_t>> groups);
  int64_t ReduceScatter(int64_t x, ReduceKind kind, int64_t dimension,
                        std::vector<std::vector<int64_t>> groups);
  int64_t AllToAll(int64_t x, int64_t split_dimension, int64_t concat_dimension,
                   std::vector<std::vector<int64_t>> groups);
  int64_t CollectivePermute(int64_t x,
                            std::vector<std::pair<int64_t, int64_t>> pairs);

  // Generic append; operands, opcode and attrs must be set. The shape is
  // inferred (instr.shape is used as the declared shape where needed).
  int64_t AddInstruction(Instruction instr, bool has_declared_shape = false);

  void SetSharding(int64_t id, Sharding sharding);
  void SetName(int64_t id, std::string name);
  const Shape& shape(int64_t id) const;
  const Instruction& instr(int64_t id) const { return graph_.instr(id); }
  int64_t size() const { return graph_.size(); }
  const Graph& graph() const { return graph_; }
  void set_mesh(DeviceMesh mesh) { graph_.mesh = std::move(mesh); }

  const absl::Status& status() const { return status_; }
  bool ok() const { return status_.ok(); }

  // Rollback discards every instruction added after the checkpoint and
  // clears an error raised after it.
  struct Checkpoint {
    int64_t size;
    bool was_ok;
  };
  Checkpoint MakeCheckpoint() const;
  void Rollback(const Checkpoint& checkpoint);

  absl::StatusOr<Graph> Build(std::vector<int64_t> outputs);

 private:
  std::string UniqueName(absl::string_view hint);
  bool CheckOperands(absl::Span<const int64_t> ids);

  Graph graph_;
  std::set<std::string> names_;
  absl::Status status_;
};

}  // namespace shardlab

#endif  // SHARDLAB_IR_BUILDER_H_
