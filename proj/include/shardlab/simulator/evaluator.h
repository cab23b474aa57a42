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

#ifndef SHARDLAB_SIMULATOR_EVALUATOR_H_
#define SHARDLAB_SIMULATOR_EVALUATOR_H_

#include <optional>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/types/span.h"
#include "shardlab/ir/graph.h"
#include "shardlab/ir/tensor.h"

namespace shardlab {

// Reference single-device evaluation. Rejects collectives and PartitionId.
absl::StatusOr<std::vector<Tensor>> EvaluateSingle(
    const Graph& graph, absl::Span<const Tensor> inputs);

// Evaluates one non-collective instruction. `partition_id` feeds
// PartitionId; it is an error to evaluate PartitionId without one.
absl::StatusOr<Tensor> EvaluateInstruction(
    const Instruction& instr, absl::Span<const Tensor* const> operands,
    std::optional<int64_t> partition_id);

// Scalar arithmetic with the dtype's overflow semantics (wrapping for
// integers, IEEE for F32). Integer division by zero is an error.
enum class ArithOp { kAdd, kSub, kMul, kDiv, kMax, kMin };
absl::StatusOr<double> Arith(ArithOp op, DType dtype, double a, double b);
ArithOp ReduceArithOp(ReduceKind kind);

}  // namespace shardlab

#endif  // SHARDLAB_SIMULATOR_EVALUATOR_H_
