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

#include "shardlab/partitioner/partitioner.h"

#include <algorithm>

#include "absl/strings/str_cat.h"
#include "shardlab/ir/verifier.h"
#include "shardlab/util/status_macros.h"
#include "src/partitioner/spmd_partitioner.h"

namespace shardlab {

namespace {

using spmd::PValue;
using spmd::SpmdPartitioner;

int64_t Clone(SpmdPartitioner& p, const Instruction& instr,
              std::vector<int64_t> operands, const Shape& shape) {
  Instruction c;
  c.opcode = instr.opcode;
  c.attrs = instr.attrs;
  c.operands = std::move(operands);
  c.shape = shape;
  return p.b().AddInstruction(std::move(c), true);
}

// Replicate every operand, compute the full result, then shard it.
absl::StatusOr<PValue> Fallback(SpmdPartitioner& p, const Instruction& instr,
                                const std::vector<PValue>& ops,
                                const Sharding& target,
                                const PartitionContext& ctx) {
  std::vector<int64_t> ids;
  for (const PValue& v : ops) {
    ASSIGN_OR_RETURN(PValue r, p.Reshard(v, Sharding::Replicate(), ctx));
    ids.push_back(r.id);
  }
  const int64_t y = Clone(p, instr, ids, instr.shape);
  return p.Reshard(PValue{y, instr.shape, Sharding::Replicate()}, target, ctx);
}

absl::StatusOr<PValue> Elementwise(SpmdPartitioner& p, const Instruction& instr,
                                   const std::vector<PValue>& ops,
                                   const Sharding& target,
                                   const PartitionContext& ctx) {
  std::vector<int64_t> ids;
  for (size_t i = 0; i < ops.size(); ++i) {
    ASSIGN_OR_RETURN(PValue r, p.Reshard(ops[i], target, ctx));
    // Padding must not trap in integer division.
    if (instr.opcode == Opcode::kDivide && i == 1 &&
        IsIntegral(r.base.dtype)) {
      r = p.MaskUneven(r, {}, p.Scalar(r.base.dtype, 1), ctx);
    }
    ids.push_back(r.id);
  }
  const int64_t y = Clone(p, instr, ids, spmd::LocalShape(instr.shape, target));
  return PValue{y, instr.shape, target};
}

absl::StatusOr<PValue> LowerIota(SpmdPartitioner& p, const Instruction& instr,
                                 const Sharding& target,
                                 const PartitionContext& ctx) {
  const Shape local = spmd::LocalShape(instr.shape, target);
  const int64_t dim = instr.attrs.dimension;
  int64_t y = p.b().Iota(local, dim);
  const int64_t tiles = target.num_tiles(dim);
  if (tiles > 1) {
    std::vector<int64_t> offsets = spmd::CoordinatesAlong(
        target, instr.shape.rank(), dim, ctx.num_logical());
    const int64_t s = CeilOfRatio(instr.shape.dims[dim], tiles);
    for (int64_t& o : offsets) o *= s;
    int64_t offset = p.PerPartition(offsets, ctx);
    if (instr.shape.dtype != DType::kS32) {
      offset = p.b().Convert(offset, instr.shape.dtype);
    }
    y = p.b().Add(y, p.BroadcastScalar(offset, local.dims));
  }
  return PValue{y, instr.shape, target};
}

absl::StatusOr<PValue> LowerBroadcast(SpmdPartitioner& p,
                                      const Instruction& instr,
                                      const PValue& x, const Sharding& target,
                                      const PartitionContext& ctx) {
  const int64_t rank = instr.shape.rank();
  const std::vector<int64_t>& dims = instr.attrs.dims;
  std::vector<int64_t> to_operand(rank, -1);
  for (size_t i = 0; i < dims.size(); ++i) to_operand[dims[i]] = i;
  ASSIGN_OR_RETURN(
      PValue v,
      p.Reshard(x, TransposeShardingDims(target, rank, to_operand, dims.size()),
                ctx));
  const int64_t y = p.b().Broadcast(
      v.id, spmd::LocalShape(instr.shape, target).dims, dims);
  return PValue{y, instr.shape, target};
}

absl::StatusOr<PValue> LowerTranspose(SpmdPartitioner& p,
                                      const Instruction& instr,
                                      const PValue& x, const Sharding& target,
                                      const PartitionContext& ctx) {
  const int64_t rank = instr.shape.rank();
  ASSIGN_OR_RETURN(
      PValue v,
      p.Reshard(x, TransposeShardingDims(target, rank, instr.attrs.dims, rank),
                ctx));
  return PValue{p.b().Transpose(v.id, instr.attrs.dims), instr.shape, target};
}

// Sliced dims are computed replicated; the rest keep the target tiling.
absl::StatusOr<PValue> LowerDynamicSlice(SpmdPartitioner& p,
                                         const Instruction& instr,
                                         const std::vector<PValue>& ops,
                                         const Sharding& target,
                                         const PartitionContext& ctx) {
  const bool update = instr.opcode == Opcode::kDynamicUpdateSlice;
  const Shape& base = ops[0].base;
  const Shape& window = update ? ops[1].base : instr.shape;
  const int64_t rank = base.rank();
  std::vector<int64_t> sliced;
  for (int64_t d = 0; d < rank; ++d) {
    if (window.dims[d] < base.dims[d]) sliced.push_back(d);
  }
  const Sharding s = ReplicateDims(target, rank, sliced);
  ASSIGN_OR_RETURN(PValue x, p.Reshard(ops[0], s, ctx));
  const size_t first_start = update ? 2 : 1;
  std::vector<int64_t> starts(rank);
  for (int64_t d = 0; d < rank; ++d) {
    if (std::find(sliced.begin(), sliced.end(), d) != sliced.end()) {
      ASSIGN_OR_RETURN(PValue st, p.Reshard(ops[first_start + d],
                                            Sharding::Replicate(), ctx));
      starts[d] = st.id;
    } else {
      starts[d] = p.Scalar(DType::kS32, 0);
    }
  }
  int64_t y;
  if (update) {
    ASSIGN_OR_RETURN(PValue u, p.Reshard(ops[1], s, ctx));
    y = p.b().DynamicUpdateSlice(x.id, u.id, starts);
  } else {
    y = p.b().DynamicSlice(x.id, starts, spmd::LocalShape(instr.shape, s).dims);
  }
  return p.Reshard(PValue{y, instr.shape, s}, target, ctx);
}

int64_t Combine(SpmdPartitioner& p, ReduceKind kind, int64_t a, int64_t b) {
  switch (kind) {
    case ReduceKind::kSum: return p.b().Add(a, b);
    case ReduceKind::kProd: return p.b().Mul(a, b);
    case ReduceKind::kMax: return p.b().Binary(Opcode::kMaximum, a, b);
    case ReduceKind::kMin:
      return p.b().Select(p.b().Compare(a, b, ComparisonDirection::kLt), a, b);
  }
  return a;
}

absl::StatusOr<PValue> LowerReduce(SpmdPartitioner& p, const Instruction& instr,
                                   const std::vector<PValue>& ops,
                                   const Sharding& target,
                                   const PartitionContext& ctx) {
  const PValue& x = ops[0];
  const int64_t in_rank = x.base.rank();
  const int64_t out_rank = instr.shape.rank();
  const std::vector<int64_t>& reduced = instr.attrs.dims;
  std::vector<int64_t> kept, to_out(in_rank, -1);
  for (int64_t d = 0; d < in_rank; ++d) {
    if (std::find(reduced.begin(), reduced.end(), d) == reduced.end()) {
      to_out[d] = kept.size();
      kept.push_back(d);
    }
  }
  const Sharding back = TransposeShardingDims(target, out_rank, kept, in_rank);
  const Sharding own = ReplicateDims(x.sharding, in_rank, kept);
  const Sharding s = MergeShardings(back, own, in_rank).value_or(back);
  ASSIGN_OR_RETURN(PValue v, p.Reshard(x, s, ctx));
  ASSIGN_OR_RETURN(PValue init, p.Reshard(ops[1], Sharding::Replicate(), ctx));
  std::vector<int64_t> tiled;
  for (int64_t d : reduced) {
    if (s.num_tiles(d) > 1) tiled.push_back(d);
  }
  const ReduceKind kind = instr.attrs.reduce_kind;
  const Sharding out_s = TransposeShardingDims(s, in_rank, to_out, out_rank);
  int64_t y;
  if (tiled.empty()) {
    y = p.b().Reduce(v.id, init.id, reduced, kind);
  } else {
    const int64_t identity = p.Identity(kind, x.base.dtype);
    v = p.MaskUneven(v, tiled, identity, ctx);
    y = p.b().Reduce(v.id, identity, reduced, kind);
    y = p.AllReduce(y, kind,
                    spmd::GroupsAlong(s, in_rank, tiled, ctx.num_logical()),
                    ctx);
    y = Combine(p, kind, p.BroadcastScalar(init.id, p.b().shape(y).dims), y);
  }
  return p.Reshard(PValue{y, instr.shape, out_s}, target, ctx);
}

absl::StatusOr<PValue> Lower(SpmdPartitioner& p, const Instruction& instr,
                             const std::vector<PValue>& ops,
                             const Sharding& target,
                             const PartitionContext& ctx) {
  switch (instr.opcode) {
    case Opcode::kParameter: {
      const int64_t id =
          p.b().Parameter(instr.attrs.parameter_index,
                          spmd::LocalShape(instr.shape, target), instr.name);
      return PValue{id, instr.shape, target};
    }
    case Opcode::kConstant: {
      const int64_t id = p.b().Constant(*instr.attrs.literal);
      return p.Reshard(PValue{id, instr.shape, Sharding::Replicate()}, target,
                       ctx);
    }
    case Opcode::kIota:
      return LowerIota(p, instr, target, ctx);
    case Opcode::kBroadcast:
      return LowerBroadcast(p, instr, ops[0], target, ctx);
    case Opcode::kTranspose:
      return LowerTranspose(p, instr, ops[0], target, ctx);
    case Opcode::kDynamicSlice:
    case Opcode::kDynamicUpdateSlice:
      return LowerDynamicSlice(p, instr, ops, target, ctx);
    case Opcode::kReduce:
      return LowerReduce(p, instr, ops, target, ctx);
    case Opcode::kDot:
      return spmd::PartitionDot(p, instr, ops[0], ops[1], target, ctx);
    case Opcode::kConvolution:
      return spmd::PartitionConvolution(p, instr, ops[0], ops[1], target, ctx);
    case Opcode::kPad:
    case Opcode::kSlice:
    case Opcode::kReverse:
    case Opcode::kReshape:
    case Opcode::kRotate:
    case Opcode::kShift:
    case Opcode::kConcatenate: {
      ASSIGN_OR_RETURN(std::optional<PValue> v,
                       spmd::PartitionDataFormatting(p, instr, ops, target, ctx));
      if (v.has_value()) return *v;
      return Fallback(p, instr, ops, target, ctx);
    }
    default:
      break;
  }
  if (IsElementwise(instr.opcode)) return Elementwise(p, instr, ops, target, ctx);
  return Fallback(p, instr, ops, target, ctx);
}

absl::Status CheckSharding(const Instruction& instr, int64_t n) {
  if (!instr.sharding.has_value() || instr.sharding->IsReplicated()) {
    return absl::OkStatus();
  }
  const Sharding& s = *instr.sharding;
  std::vector<int64_t> devices = s.devices();
  std::sort(devices.begin(), devices.end());
  bool ok = static_cast<int64_t>(devices.size()) == n &&
            s.data_rank() == instr.shape.rank();
  for (int64_t i = 0; ok && i < n; ++i) ok = devices[i] == i;
  if (!ok) {
    return absl::InvalidArgumentError(absl::StrCat(
        "UnsupportedSharding: ", instr.name, " sharding ", s.ToString(),
        " does not cover devices 0..", n - 1, " at rank ",
        instr.shape.rank()));
  }
  return absl::OkStatus();
}

}  // namespace

absl::StatusOr<SpmdProgram> Partition(const Graph& input,
                                      int64_t num_partitions,
                                      const PartitionOptions& options) {
  if (num_partitions < 1) {
    return absl::InvalidArgumentError(
        "UnsupportedSharding: num_partitions must be positive");
  }
  RETURN_IF_ERROR(ValidateGraphStatus(input));
  const Graph graph = options.detect_rotate ? DetectAndRotate(input) : input;
  for (int64_t i = 0; i < graph.size(); ++i) {
    const Instruction& instr = graph.instr(i);
    if (IsCollective(instr.opcode) || instr.opcode == Opcode::kPartitionId) {
      return WithProvenance(
          absl::InvalidArgumentError(absl::StrCat(
              "UnsupportedOp: ", instr.name, " (", OpcodeName(instr.opcode),
              ") may only appear in partitioned programs")),
          graph, i);
    }
    RETURN_IF_ERROR(
        WithProvenance(CheckSharding(instr, num_partitions), graph, i));
  }

  SpmdPartitioner p(num_partitions);
  if (graph.mesh.has_value()) p.b().set_mesh(*graph.mesh);
  const PartitionContext& ctx = p.root();
  SpmdProgram program;
  program.num_partitions = num_partitions;
  for (int64_t d = 0; d < num_partitions; ++d) program.devices.push_back(d);
  std::vector<PValue> values(graph.size());
  for (int64_t i = 0; i < graph.size(); ++i) {
    const Instruction& instr = graph.instr(i);
    const Sharding target = instr.sharding.value_or(Sharding::Replicate());
    std::vector<PValue> ops;
    for (int64_t o : instr.operands) ops.push_back(values[o]);
    p.set_current(instr.name);
    const int64_t begin = p.b().size();
    absl::StatusOr<PValue> v = Lower(p, instr, ops, target, ctx);
    if (!v.ok()) return WithProvenance(v.status(), graph, i);
    RETURN_IF_ERROR(WithProvenance(p.b().status(), graph, i));
    values[i] = *v;
    program.lowered.emplace_back(begin, p.b().size());
  }
  std::vector<int64_t> outputs;
  for (int64_t o : graph.outputs) outputs.push_back(values[o].id);
  ASSIGN_OR_RETURN(program.graph, p.b().Build(outputs));
  program.graph.name = graph.name;
  for (int64_t id : graph.Parameters()) {
    program.input_shapes.push_back(graph.instr(id).shape);
    program.input_shardings.push_back(values[id].sharding);
  }
  for (int64_t o : graph.outputs) {
    program.output_shapes.push_back(graph.instr(o).shape);
    program.output_shardings.push_back(values[o].sharding);
  }
  program.halos = p.halos();
  RETURN_IF_ERROR(ValidateGraphStatus(program.graph));
  return program;
}

}  // namespace shardlab
