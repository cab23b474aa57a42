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

#ifndef SHARDLAB_SIMULATOR_EQUIVALENCE_H_
#define SHARDLAB_SIMULATOR_EQUIVALENCE_H_

#include <cstdint>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/types/span.h"
#include "shardlab/ir/graph.h"
#include "shardlab/ir/tensor.h"
#include "shardlab/partitioner/spmd_program.h"
#include "shardlab/partitioner/stats.h"

namespace shardlab {

struct EquivalenceOptions {
  double atol = 1e-4;
  double rtol = 1e-4;
  // Value written into shard padding; results must not depend on it.
  double pad_value = 0.0;
};

struct EquivalenceReport {
  bool pass = false;
  double max_abs_error = 0;
  double max_rel_error = 0;
  std::vector<std::string> mismatches;  // first few, per output
  CollectiveStats stats;

  std::string ToJson() const;
};

// Evaluates `graph` on one device and `program` on all of its devices with
// the same inputs, assembles the sharded outputs and compares them
// elementwise: integers exactly, F32 with |a - b| <= atol + rtol * |b|.
absl::StatusOr<EquivalenceReport> VerifyEquivalence(
    const Graph& graph, const SpmdProgram& program,
    absl::Span<const Tensor> inputs, const EquivalenceOptions& options = {});

// Deterministic inputs for every parameter: F32 uniform in [-1, 1], integers
// in [-8, 8], PRED fair coin.
std::vector<Tensor> RandomInputs(const Graph& graph, uint64_t seed);

}  // namespace shardlab

#endif  // SHARDLAB_SIMULATOR_EQUIVALENCE_H_
