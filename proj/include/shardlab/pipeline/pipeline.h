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

// Pipeline parallelism expressed as a sharding problem: the stage body is
// vectorized over a leading stage dimension L and a shifting buffer passes
// activations between stages. Sharding L turns the shift into
// CollectivePermute.

#ifndef SHARDLAB_PIPELINE_PIPELINE_H_
#define SHARDLAB_PIPELINE_PIPELINE_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "absl/status/status.h"
#include "absl/status/statusor.h"
#include "absl/strings/string_view.h"
#include "shardlab/ir/graph.h"

namespace shardlab {

enum class PipelineSchedule { kGPipe, kCircular };

struct PipelineConfig {
  int64_t stages = 1;        // L
  int64_t microbatches = 1;  // M
  PipelineSchedule schedule = PipelineSchedule::kGPipe;
  // Layers held by each stage (R). Circular assigns layer r * L + l to
  // stage l; GPipe requires R = 1.
  int64_t layers_per_stage = 1;
  // Applied to every state buffer [L, ...] when set.
  std::optional<Sharding> state_sharding;

  int64_t total_layers() const { return stages * layers_per_stage; }
};

absl::Status ValidatePipelineConfig(const PipelineConfig& config);

// Parses "gpipe" or "circular:R".
absl::Status ParseSchedule(absl::string_view text, PipelineConfig* config);

// Work done by one stage in one iteration; microbatch < 0 means the stage
// computes on padding.
struct StageSlot {
  int64_t microbatch = -1;
  int64_t round = 0;  // layer r * L + l for stage l
};

// slots[t][l] for every unrolled iteration t and stage l.
std::vector<std::vector<StageSlot>> UnrolledSchedule(
    const PipelineConfig& config);

struct BubbleStats {
  int64_t iterations = 0;
  int64_t stage_slots = 0;     // iterations * L
  int64_t padded_slots = 0;    // stage applications on padding
  int64_t ratio_numerator = 0;  // padded / slots in lowest terms
  int64_t ratio_denominator = 1;
  double ratio = 0;

  std::string ToJson() const;
};

// Counted from UnrolledSchedule. GPipe gives (L-1)/(M+L-1).
BubbleStats ComputeBubbleStats(const PipelineConfig& config);

// Lifts a per-example stage body to one with a leading dimension of size
// `stages` on every parameter and output. Scalars and constants stay
// unbatched until they meet a batched value.
absl::StatusOr<Graph> VectorizeStage(const Graph& body, int64_t stages);

// Unrolls the pipeline. `stage_body` is vectorized: parameter 0 is the
// state [L, act...], parameters 1..k are per-stage weights [L, w...], and
// its single output has the state's shape. The result takes the
// microbatches [M, act...] as parameter 0 and the weights as parameters
// 1..k, shaped [L, w...] (GPipe) or [L, R, w...] (circular), and returns
// [M, act...].
absl::StatusOr<Graph> BuildPipeline(const PipelineConfig& config,
                                    const Graph& stage_body);

// Relu(Dot(x, w) + x) over activations [hidden] with weights [hidden,
// hidden]; used by the CLI when no body is given.
Graph DefaultStageBody(DType dtype, int64_t hidden);

}  // namespace shardlab

#endif  // SHARDLAB_PIPELINE_PIPELINE_H_
