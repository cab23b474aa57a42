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

#include "shardlab/pipeline/pipeline.h"

#include <algorithm>
#include <map>
#include <numeric>
#include <utility>

#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/strip.h"
#include "json.hpp"
#include "shardlab/ir/builder.h"
#include "shardlab/util/status_macros.h"

namespace shardlab {
namespace {

std::vector<int64_t> Prepend(int64_t d, const std::vector<int64_t>& dims) {
  std::vector<int64_t> out = {d};
  out.insert(out.end(), dims.begin(), dims.end());
  return out;
}

std::vector<int64_t> PlusOne(std::vector<int64_t> v) {
  for (int64_t& x : v) ++x;
  return v;
}

absl::Status Unsupported(const Instruction& instr, absl::string_view why) {
  return absl::UnimplementedError(
      absl::StrCat("UnsupportedOp: cannot vectorize ", instr.name, " (",
                   OpcodeName(instr.opcode), "): ", why));
}

// Copies `body` into `b` with parameter i bound to args[i]; returns the id
// of its output.
int64_t Inline(GraphBuilder& b, const Graph& body,
               const std::vector<int64_t>& args) {
  std::vector<int64_t> map(body.size(), -1);
  for (int64_t i = 0; i < body.size(); ++i) {
    const Instruction& instr = body.instr(i);
    if (instr.opcode == Opcode::kParameter) {
      map[i] = args[instr.attrs.parameter_index];
      continue;
    }
    Instruction c = instr;
    for (int64_t& o : c.operands) o = map[o];
    c.source_line = 0;
    map[i] = b.AddInstruction(std::move(c), /*has_declared_shape=*/true);
  }
  return map[body.outputs[0]];
}

}  // namespace

absl::Status ValidatePipelineConfig(const PipelineConfig& config) {
  if (config.stages < 1 || config.microbatches < 1 ||
      config.layers_per_stage < 1) {
    return absl::InvalidArgumentError(absl::StrCat(
        "InvalidConfig: stages, microbatches and layers per stage must be "
        ">= 1, got ",
        config.stages, ", ", config.microbatches, ", ",
        config.layers_per_stage));
  }
  if (config.schedule == PipelineSchedule::kGPipe &&
      config.layers_per_stage != 1) {
    return absl::InvalidArgumentError(
        "InvalidConfig: the gpipe schedule holds one layer per stage");
  }
  return absl::OkStatus();
}

absl::Status ParseSchedule(absl::string_view text, PipelineConfig* config) {
  if (text == "gpipe") {
    config->schedule = PipelineSchedule::kGPipe;
    config->layers_per_stage = 1;
    return absl::OkStatus();
  }
  int64_t r = 0;
  if (absl::ConsumePrefix(&text, "circular:") && absl::SimpleAtoi(text, &r) &&
      r >= 1) {
    config->schedule = PipelineSchedule::kCircular;
    config->layers_per_stage = r;
    return absl::OkStatus();
  }
  return absl::InvalidArgumentError(absl::StrCat(
      "InvalidConfig: schedule must be gpipe or circular:R, got '", text, "'"));
}

std::vector<std::vector<StageSlot>> UnrolledSchedule(
    const PipelineConfig& config) {
  const int64_t l_count = config.stages, m_count = config.microbatches;
  const int64_t r_count = config.layers_per_stage;
  // start(m, r) = iteration at which stage 0 applies round r to microbatch
  // m. Circular runs microbatches in groups of L; a group cycles through
  // all rounds before the next one enters.
  auto start = [&](int64_t m, int64_t r) {
    if (config.schedule == PipelineSchedule::kGPipe) return m;
    return (m / l_count) * r_count * l_count + r * l_count + m % l_count;
  };
  int64_t iterations = 0;
  for (int64_t m = 0; m < m_count; ++m) {
    iterations = std::max(iterations, start(m, r_count - 1) + l_count);
  }
  std::vector<std::vector<StageSlot>> slots(
      iterations, std::vector<StageSlot>(l_count));
  for (int64_t m = 0; m < m_count; ++m) {
    for (int64_t r = 0; r < r_count; ++r) {
      for (int64_t l = 0; l < l_count; ++l) {
        slots[start(m, r) + l][l] = StageSlot{m, r};
      }
    }
  }
  return slots;
}

BubbleStats ComputeBubbleStats(const PipelineConfig& config) {
  BubbleStats s;
  const auto slots = UnrolledSchedule(config);
  s.iterations = slots.size();
  s.stage_slots = s.iterations * config.stages;
  for (const auto& row : slots) {
    for (const StageSlot& slot : row) s.padded_slots += slot.microbatch < 0;
  }
  const int64_t g = std::gcd(s.padded_slots, s.stage_slots);
  s.ratio_numerator = g ? s.padded_slots / g : 0;
  s.ratio_denominator = g ? s.stage_slots / g : 1;
  s.ratio = s.stage_slots
                ? static_cast<double>(s.padded_slots) / s.stage_slots
                : 0.0;
  return s;
}

std::string BubbleStats::ToJson() const {
  nlohmann::ordered_json j;
  j["iterations"] = iterations;
  j["stage_slots"] = stage_slots;
  j["padded_slots"] = padded_slots;
  j["ratio"] = absl::StrCat(ratio_numerator, "/", ratio_denominator);
  j["ratio_value"] = ratio;
  return j.dump(2);
}

absl::StatusOr<Graph> VectorizeStage(const Graph& body, int64_t stages) {
  GraphBuilder b(body.name);
  std::vector<int64_t> map(body.size(), -1);
  std::vector<bool> batched(body.size(), false);
  auto batch = [&](int64_t old) {
    if (batched[old]) return map[old];
    const Shape& s = body.instr(old).shape;
    std::vector<int64_t> bdims(s.rank());
    std::iota(bdims.begin(), bdims.end(), 1);
    return b.Broadcast(map[old], Prepend(stages, s.dims), bdims);
  };
  for (int64_t i = 0; i < body.size(); ++i) {
    const Instruction& instr = body.instr(i);
    const bool any = std::any_of(instr.operands.begin(), instr.operands.end(),
                                 [&](int64_t o) { return batched[o]; });
    Instruction c = instr;
    c.sharding.reset();
    c.source_line = 0;
    for (int64_t& o : c.operands) o = map[o];
    if (instr.opcode == Opcode::kParameter) {
      map[i] = b.Parameter(instr.attrs.parameter_index,
                           Shape(instr.shape.dtype,
                                 Prepend(stages, instr.shape.dims)),
                           instr.name);
      batched[i] = true;
      continue;
    }
    if (!any) {
      map[i] = b.AddInstruction(std::move(c), true);
      continue;
    }
    auto scalar_operand = [&](int64_t k) -> absl::Status {
      if (batched[instr.operands[k]]) {
        return Unsupported(instr, "scalar operand depends on a parameter");
      }
      return absl::OkStatus();
    };
    c.shape = Shape(instr.shape.dtype, Prepend(stages, instr.shape.dims));
    Attrs& a = c.attrs;
    switch (instr.opcode) {
      case Opcode::kBroadcast:
        a.dims = Prepend(0, PlusOne(a.dims));
        break;
      case Opcode::kReshape:
        break;
      case Opcode::kTranspose:
        a.dims = Prepend(0, PlusOne(a.dims));
        break;
      case Opcode::kReverse:
        a.dims = PlusOne(a.dims);
        break;
      case Opcode::kReduce:
        RETURN_IF_ERROR(scalar_operand(1));
        a.dims = PlusOne(a.dims);
        break;
      case Opcode::kPad:
        RETURN_IF_ERROR(scalar_operand(1));
        a.padding.insert(a.padding.begin(), PaddingDim{});
        break;
      case Opcode::kSlice:
        a.slice.insert(a.slice.begin(), SliceDim{0, stages, 1});
        break;
      case Opcode::kRotate:
        ++a.dimension;
        break;
      case Opcode::kShift:
        RETURN_IF_ERROR(scalar_operand(1));
        ++a.dimension;
        break;
      case Opcode::kConcatenate:
        ++a.dimension;
        for (size_t k = 0; k < c.operands.size(); ++k) {
          c.operands[k] = batch(instr.operands[k]);
        }
        break;
      case Opcode::kDot:
        c.operands = {batch(instr.operands[0]), batch(instr.operands[1])};
        a.dot.lhs_batch = Prepend(0, PlusOne(a.dot.lhs_batch));
        a.dot.rhs_batch = Prepend(0, PlusOne(a.dot.rhs_batch));
        a.dot.lhs_contracting = PlusOne(a.dot.lhs_contracting);
        a.dot.rhs_contracting = PlusOne(a.dot.rhs_contracting);
        break;
      default:
        if (!IsElementwise(instr.opcode)) {
          return Unsupported(instr, "no batching rule");
        }
        for (size_t k = 0; k < c.operands.size(); ++k) {
          c.operands[k] = batch(instr.operands[k]);
        }
        break;
    }
    map[i] = b.AddInstruction(std::move(c), true);
    batched[i] = true;
  }
  std::vector<int64_t> outputs;
  for (int64_t o : body.outputs) outputs.push_back(batch(o));
  return b.Build(outputs);
}

absl::StatusOr<Graph> BuildPipeline(const PipelineConfig& config,
                                    const Graph& stage_body) {
  RETURN_IF_ERROR(ValidatePipelineConfig(config));
  const int64_t l_count = config.stages, m_count = config.microbatches;
  const int64_t r_count = config.layers_per_stage;
  const bool circular = config.schedule == PipelineSchedule::kCircular;
  const std::vector<int64_t> params = stage_body.Parameters();
  if (params.empty() || stage_body.outputs.size() != 1) {
    return absl::InvalidArgumentError(
        "ShapeMismatch: the stage body needs a state parameter and exactly "
        "one output");
  }
  const Shape state_shape = stage_body.instr(params[0]).shape;
  const Shape out_shape = stage_body.instr(stage_body.outputs[0]).shape;
  if (state_shape != out_shape) {
    return absl::InvalidArgumentError(absl::StrCat(
        "ShapeMismatch: stage body maps ", state_shape.ToString(), " to ",
        out_shape.ToString(), "; stages must be homogeneous"));
  }
  for (int64_t p : params) {
    const Shape& s = stage_body.instr(p).shape;
    if (s.rank() == 0 || s.dims[0] != l_count) {
      return absl::InvalidArgumentError(absl::StrCat(
          "ShapeMismatch: stage body parameter ", stage_body.instr(p).name,
          " has shape ", s.ToString(), "; expected a leading dimension of ",
          l_count));
    }
  }
  const DType dtype = state_shape.dtype;
  const std::vector<int64_t> act(state_shape.dims.begin() + 1,
                                 state_shape.dims.end());

  GraphBuilder b("pipeline");
  const int64_t inputs =
      b.Parameter(0, Shape(dtype, Prepend(m_count, act)), "microbatches");
  std::vector<int64_t> weights;
  std::vector<Shape> weight_shapes;
  for (size_t i = 1; i < params.size(); ++i) {
    const Instruction& p = stage_body.instr(params[i]);
    std::vector<int64_t> dims = p.shape.dims;
    if (circular) dims.insert(dims.begin() + 1, r_count);
    weights.push_back(b.Parameter(i, Shape(p.shape.dtype, dims), p.name));
    weight_shapes.push_back(p.shape);
  }

  const int64_t zero = b.ScalarConstant(dtype, 0);
  int64_t state = b.BroadcastScalar(zero, state_shape.dims);
  const int64_t first_stage = b.Compare(
      b.Iota(Shape(DType::kS32, state_shape.dims), 0),
      b.BroadcastScalar(b.ScalarConstant(DType::kS32, 0), state_shape.dims),
      ComparisonDirection::kEq);

  // Per-stage weights for a vector of rounds, one entry per stage.
  std::map<std::vector<int64_t>, std::vector<int64_t>> weight_cache;
  auto stage_weights = [&](const std::vector<int64_t>& rounds) {
    if (!circular) return weights;
    auto it = weight_cache.find(rounds);
    if (it != weight_cache.end()) return it->second;
    std::vector<int64_t> out;
    const bool uniform = std::all_of(rounds.begin(), rounds.end(),
                                     [&](int64_t r) { return r == rounds[0]; });
    for (size_t i = 0; i < weights.size(); ++i) {
      const Shape& ws = weight_shapes[i];
      if (uniform) {
        out.push_back(b.Reshape(
            b.SliceInDim(weights[i], 1, rounds[0], rounds[0] + 1), ws.dims));
        continue;
      }
      // Pick round rounds[l] for stage l: mask and sum over the R dim.
      const Shape full = b.shape(weights[i]);
      const int64_t want =
          b.Broadcast(b.S32Table(rounds), full.dims, {0});
      const int64_t mask = b.Compare(b.Iota(full.WithDType(DType::kS32), 1),
                                     want, ComparisonDirection::kEq);
      const int64_t wzero = b.ScalarConstant(full.dtype, 0);
      const int64_t picked =
          b.Select(mask, weights[i], b.BroadcastScalar(wzero, full.dims));
      out.push_back(b.Reduce(picked, wzero, {1}, ReduceKind::kSum));
    }
    weight_cache.emplace(rounds, out);
    return out;
  };

  const auto slots = UnrolledSchedule(config);
  std::vector<int64_t> collected(m_count, -1);
  for (const auto& row : slots) {
    // Shift the buffer right by one stage.
    int64_t shifted = state;
    if (!circular) {
      std::vector<PaddingDim> pad(state_shape.rank());
      pad[0].low = 1;
      std::vector<SliceDim> slice;
      for (int64_t d : state_shape.dims) slice.push_back(SliceDim{0, d, 1});
      shifted = b.Slice(b.Pad(state, zero, pad), slice);
    } else if (l_count > 1) {
      shifted = b.Concatenate({b.SliceInDim(state, 0, l_count - 1, l_count),
                               b.SliceInDim(state, 0, 0, l_count - 1)},
                              0);
    }
    int64_t input = shifted;
    const StageSlot& head = row[0];
    if (head.microbatch >= 0 && head.round == 0) {
      std::vector<int64_t> bdims(act.size());
      std::iota(bdims.begin(), bdims.end(), 1);
      const int64_t mb = b.Reshape(
          b.SliceInDim(inputs, 0, head.microbatch, head.microbatch + 1), act);
      input = b.Select(first_stage, b.Broadcast(mb, state_shape.dims, bdims),
                       shifted);
    }
    std::vector<int64_t> rounds(l_count, -1);
    for (int64_t l = 0; l < l_count; ++l) {
      if (row[l].microbatch >= 0) rounds[l] = row[l].round;
    }
    const int64_t any = *std::max_element(rounds.begin(), rounds.end());
    for (int64_t& r : rounds) {
      if (r < 0) r = std::max<int64_t>(any, 0);  // idle stages: any layer
    }
    std::vector<int64_t> args = {input};
    for (int64_t w : stage_weights(rounds)) args.push_back(w);
    state = Inline(b, stage_body, args);
    if (config.state_sharding) b.SetSharding(state, *config.state_sharding);
    const StageSlot& tail = row[l_count - 1];
    if (tail.microbatch >= 0 && tail.round == r_count - 1) {
      collected[tail.microbatch] =
          b.SliceInDim(state, 0, l_count - 1, l_count);
    }
  }
  const int64_t result =
      m_count == 1 ? collected[0] : b.Concatenate(collected, 0);
  return b.Build({result});
}

Graph DefaultStageBody(DType dtype, int64_t hidden) {
  GraphBuilder b("stage");
  const int64_t x = b.Parameter(0, Shape(dtype, {hidden}), "x");
  const int64_t w = b.Parameter(1, Shape(dtype, {hidden, hidden}), "w");
  DotDims dims;
  dims.lhs_contracting = {0};
  dims.rhs_contracting = {0};
  const int64_t y = b.Unary(Opcode::kRelu, b.Add(b.Dot(x, w, dims), x));
  return *b.Build({y});
}

}  // namespace shardlab
