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

#ifndef SHARDLAB_IR_SHAPE_INFERENCE_H_
#define SHARDLAB_IR_SHAPE_INFERENCE_H_

#include <optional>

#include "absl/status/statusor.h"
#include "absl/types/span.h"
#include "shardlab/ir/graph.h"

namespace shardlab {

// Expected operand count for `opcode`; nullopt when variadic.
std::optional<int64_t> ExpectedArity(Opcode opcode,
                                     absl::Span<const Shape> operands);

// Computes the result shape. Parameter, Iota, Broadcast, Reshape and
// Convert take their result from `declared`, which is validated against the
// operands. Errors are InvalidArgument with an "IncompatibleShapes:" prefix.
absl::StatusOr<Shape> InferShape(Opcode opcode,
                                 absl::Span<const Shape> operands,
                                 const Attrs& attrs,
                                 const std::optional<Shape>& declared);

}  // namespace shardlab

#endif  // SHARDLAB_IR_SHAPE_INFERENCE_H_
