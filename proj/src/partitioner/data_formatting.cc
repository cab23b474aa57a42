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

#include <algorithm>
#include <map>

#include "absl/strings/match.h"

#include "shardlab/propagation/rules.h"
#include "shardlab/util/status_macros.h"
#include "src/partitioner/spmd_partitioner.h"

namespace shardlab::spmd {

namespace {

using Result = absl::StatusOr<std::optional<PValue>>;

std::vector<int64_t> Range(int64_t n) {
  std::vector<int64_t> v(n);
  for (int64_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Operand keeps the target's tiling; the op's own dims are then realigned.
Result PartitionPad(SpmdPartitioner& p, const Instruction& instr,
                    const std::vector<PValue>& ops, const Sharding& t,
                    const PartitionContext& ctx) {
  const Shape& out = instr.shape;
  const int64_t rank = out.rank();
  std::vector<PaddingDim> local = instr.attrs.padding;
  for (int64_t d = 0; d < rank; ++d) {
    if (t.num_tiles(d) > 1 && local[d].interior != 0) return std::nullopt;
  }
  ASSIGN_OR_RETURN(PValue x, p.Reshard(ops[0], t, ctx));
  const int64_t fill = ops[1].id;
  int64_t y = x.id;
  for (int64_t d = 0; d < rank; ++d) {
    const int64_t tiles = t.num_tiles(d);
    if (tiles == 1) continue;
    const PaddingDim pd = local[d];
    local[d] = PaddingDim{};
    if (pd.low == 0 && pd.high == 0) continue;
    const int64_t n = x.base.dims[d];
    const int64_t s_in = CeilOfRatio(n, tiles);
    const int64_t s_out = CeilOfRatio(out.dims[d], tiles);
    std::vector<int64_t> start(tiles);
    for (int64_t c = 0; c < tiles; ++c) start[c] = c * s_out - pd.low;
    ASSIGN_OR_RETURN(y, p.Realign(y, t, rank, d, s_in, start, s_out, n, fill,
                                  ctx));
  }
  if (std::any_of(local.begin(), local.end(), [](const PaddingDim& pd) {
        return pd.low != 0 || pd.high != 0 || pd.interior != 0;
      })) {
    y = p.b().Pad(y, fill, local);
  }
  return PValue{y, out, t};
}

Result PartitionSlice(SpmdPartitioner& p, const Instruction& instr,
                      const std::vector<PValue>& ops, const Sharding& t,
                      const PartitionContext& ctx) {
  const Shape& out = instr.shape;
  const int64_t rank = out.rank();
  std::vector<SliceDim> local = instr.attrs.slice;
  for (int64_t d = 0; d < rank; ++d) {
    if (t.num_tiles(d) > 1 && local[d].stride != 1) return std::nullopt;
  }
  ASSIGN_OR_RETURN(PValue x, p.Reshard(ops[0], t, ctx));
  int64_t y = x.id;
  for (int64_t d = 0; d < rank; ++d) {
    const int64_t tiles = t.num_tiles(d);
    if (tiles == 1) continue;
    const int64_t s_in = CeilOfRatio(x.base.dims[d], tiles);
    const int64_t s_out = CeilOfRatio(out.dims[d], tiles);
    std::vector<int64_t> start(tiles);
    for (int64_t c = 0; c < tiles; ++c) start[c] = local[d].start + c * s_out;
    ASSIGN_OR_RETURN(y, p.Realign(y, t, rank, d, s_in, start, s_out,
                                  std::nullopt, 0, ctx));
    local[d] = SliceDim{0, s_out, 1};
  }
  const Shape cur = p.b().shape(y);
  bool identity = true;
  for (int64_t d = 0; d < rank; ++d) {
    if (local[d].start != 0 || local[d].limit != cur.dims[d] ||
        local[d].stride != 1) {
      identity = false;
    }
  }
  if (!identity) y = p.b().Slice(y, local);
  return PValue{y, out, t};
}

// Uneven shards leave padding on the left after a local reverse; shift it
// back to the right.
Result PartitionReverse(SpmdPartitioner& p, const Instruction& instr,
                        const std::vector<PValue>& ops, const Sharding& t,
                        const PartitionContext& ctx) {
  const Shape& out = instr.shape;
  const int64_t rank = out.rank();
  const std::vector<int64_t>& dims = instr.attrs.dims;
  Sharding operand = t;
  if (!t.IsReplicated()) {
    std::vector<int64_t> counts(rank);
    for (int64_t d = 0; d < rank; ++d) counts[d] = t.num_tiles(d);
    auto flipped = ShardingFromCoordinates(
        counts, t.devices(), [&](int64_t device) {
          std::vector<int64_t> c = *t.TileCoordinate(device, rank);
          for (int64_t d : dims) c[d] = counts[d] - 1 - c[d];
          return c;
        });
    if (!flipped) return std::nullopt;
    operand = *flipped;
  }
  ASSIGN_OR_RETURN(PValue x, p.Reshard(ops[0], operand, ctx));
  int64_t y = p.b().Reverse(x.id, dims);
  for (int64_t d : dims) {
    const int64_t tiles = t.num_tiles(d);
    const int64_t n = out.dims[d];
    if (tiles == 1 || n % tiles == 0) continue;
    const int64_t s = CeilOfRatio(n, tiles);
    const int64_t pad = s * tiles - n;
    std::vector<int64_t> start(tiles);
    for (int64_t c = 0; c < tiles; ++c) start[c] = c * s + pad;
    ASSIGN_OR_RETURN(y, p.Realign(y, t, rank, d, s, start, s, std::nullopt, 0,
                                  ctx));
  }
  return PValue{y, out, t};
}

// Neighbor pairs moving coordinate (c + shift) to c along `dim`.
std::vector<std::pair<int64_t, int64_t>> ShiftPairs(const Sharding& s,
                                                    int64_t rank, int64_t dim,
                                                    int64_t shift, bool wrap,
                                                    int64_t m) {
  const int64_t tiles = s.num_tiles(dim);
  std::map<std::pair<std::vector<int64_t>, int64_t>, int64_t> at;
  for (int64_t l = 0; l < m; ++l) {
    at[{*s.TileCoordinate(l, rank), *s.ReplicaIndex(l)}] = l;
  }
  std::vector<std::pair<int64_t, int64_t>> pairs;
  for (int64_t l = 0; l < m; ++l) {
    std::vector<int64_t> c = *s.TileCoordinate(l, rank);
    int64_t src = c[dim] + shift;
    if (wrap) src = ((src % tiles) + tiles) % tiles;
    if (src < 0 || src >= tiles) continue;
    c[dim] = src;
    pairs.emplace_back(at[{c, *s.ReplicaIndex(l)}], l);
  }
  return pairs;
}

Result PartitionRotate(SpmdPartitioner& p, const Instruction& instr,
                       const std::vector<PValue>& ops, const Sharding& t,
                       const PartitionContext& ctx) {
  const Shape& out = instr.shape;
  const int64_t rank = out.rank();
  const int64_t d = instr.attrs.dimension;
  const int64_t tiles = t.num_tiles(d);
  const int64_t n = out.dims[d];
  ASSIGN_OR_RETURN(PValue x, p.Reshard(ops[0], t, ctx));
  if (tiles == 1) {
    return PValue{p.b().Rotate(x.id, d, instr.attrs.amount), out, t};
  }
  if (n % tiles != 0) return std::nullopt;
  const int64_t m = ctx.num_logical();
  const int64_t s = n / tiles;
  const int64_t k = ((instr.attrs.amount % n) + n) % n;
  const int64_t q = k / s, r = k % s;
  if (r == 0) {
    if (q == 0) return PValue{x.id, out, t};
    const int64_t y =
        p.CollectivePermute(x.id, ShiftPairs(t, rank, d, q, true, m), ctx);
    return PValue{y, out, t};
  }
  const int64_t head = p.CollectivePermute(
      p.b().SliceInDim(x.id, d, r, s), ShiftPairs(t, rank, d, q, true, m), ctx);
  const int64_t tail =
      p.CollectivePermute(p.b().SliceInDim(x.id, d, 0, r),
                          ShiftPairs(t, rank, d, q + 1, true, m), ctx);
  return PValue{p.b().Concatenate({head, tail}, d), out, t};
}

Result PartitionShift(SpmdPartitioner& p, const Instruction& instr,
                      const std::vector<PValue>& ops, const Sharding& t,
                      const PartitionContext& ctx) {
  const Shape& out = instr.shape;
  const int64_t rank = out.rank();
  const int64_t d = instr.attrs.dimension;
  const int64_t tiles = t.num_tiles(d);
  const int64_t n = out.dims[d];
  const int64_t k = instr.attrs.amount;
  const int64_t fill = ops[1].id;
  ASSIGN_OR_RETURN(PValue x, p.Reshard(ops[0], t, ctx));
  if (tiles == 1) {
    return PValue{p.b().Shift(x.id, fill, d, k), out, t};
  }
  const int64_t m = ctx.num_logical();
  const int64_t s = CeilOfRatio(n, tiles);
  if (n % tiles == 0 && k % s == 0) {
    int64_t y = x.id;
    if (k != 0) {
      y = p.CollectivePermute(x.id, ShiftPairs(t, rank, d, -k / s, false, m),
                              ctx);
      // Partitions without a source hold zeros; replace them by the fill.
      std::vector<int64_t> has_source(m, 0);
      const auto coord = CoordinatesAlong(t, rank, d, m);
      for (int64_t l = 0; l < m; ++l) {
        const int64_t src = coord[l] - k / s;
        has_source[l] = src >= 0 && src < tiles;
      }
      const int64_t pred = p.b().Compare(p.PerPartition(has_source, ctx),
                                         p.Scalar(DType::kS32, 1),
                                         ComparisonDirection::kEq);
      const std::vector<int64_t> dims = p.b().shape(y).dims;
      y = p.b().Select(p.BroadcastScalar(pred, dims), y,
                       p.BroadcastScalar(fill, dims));
    }
    return PValue{y, out, t};
  }
  std::vector<int64_t> start(tiles);
  for (int64_t c = 0; c < tiles; ++c) start[c] = c * s - k;
  ASSIGN_OR_RETURN(int64_t y,
                   p.Realign(x.id, t, rank, d, s, start, s, n, fill, ctx));
  return PValue{y, out, t};
}

Result PartitionReshape(SpmdPartitioner& p, const Instruction& instr,
                        const std::vector<PValue>& ops, const Sharding& t,
                        const PartitionContext& ctx) {
  const Shape& out = instr.shape;
  const Shape& in = ops[0].base;
  const int64_t m = ctx.num_logical();
  const int64_t orank = out.rank(), irank = in.rank();
  const Sharding back = ReshapeSharding(t, out.dims, in.dims);
  if (SameTiling(ReshapeSharding(back, in.dims, out.dims), t, orank, Range(m))) {
    ASSIGN_OR_RETURN(PValue x, p.Reshard(ops[0], back, ctx));
    return PValue{p.b().Reshape(x.id, LocalShape(out, t).dims), out, t};
  }
  // One tiled output dim fed by one tiled input dim: realign the flattened
  // suffix block.
  const std::vector<int64_t> tiled = t.ShardedDims();
  if (tiled.size() != 1) return std::nullopt;
  const int64_t e = tiled[0];
  const int64_t tiles = t.num_tiles(e);
  int64_t prefix = 1, inner = 1;
  for (int64_t i = 0; i < e; ++i) prefix *= out.dims[i];
  for (int64_t i = e + 1; i < orank; ++i) inner *= out.dims[i];
  int64_t d = -1, acc = 1;
  for (int64_t i = 0; i < irank; ++i) {
    if (acc == prefix) {
      d = i;
      break;
    }
    acc *= in.dims[i];
  }
  if (d < 0 || in.dims[d] < tiles) return std::nullopt;
  int64_t minor = 1;
  for (int64_t i = d + 1; i < irank; ++i) minor *= in.dims[i];
  std::vector<int64_t> to_in(orank, -1);
  to_in[e] = d;
  const Sharding operand = TransposeShardingDims(t, orank, to_in, irank);
  ASSIGN_OR_RETURN(PValue x, p.Reshard(ops[0], operand, ctx));
  const int64_t s_in = CeilOfRatio(in.dims[d], tiles);
  const int64_t s_out = CeilOfRatio(out.dims[e], tiles);
  std::vector<int64_t> to_flat(orank, -1);
  to_flat[e] = 1;
  const Sharding flat = TransposeShardingDims(t, orank, to_flat, 2);
  const int64_t local_prefix = prefix;  // prefix dims are untiled
  int64_t y = p.b().Reshape(x.id, {local_prefix, s_in * minor});
  std::vector<int64_t> start(tiles);
  for (int64_t c = 0; c < tiles; ++c) start[c] = c * s_out * inner;
  ASSIGN_OR_RETURN(y, p.Realign(y, flat, 2, 1, s_in * minor, start,
                                s_out * inner, std::nullopt, 0, ctx));
  return PValue{p.b().Reshape(y, LocalShape(out, t).dims), out, t};
}

Result PartitionConcat(SpmdPartitioner& p, const Instruction& instr,
                       const std::vector<PValue>& ops, const Sharding& t,
                       const PartitionContext& ctx) {
  const int64_t dim = instr.attrs.dimension;
  if (t.num_tiles(dim) > 1) return std::nullopt;
  std::vector<int64_t> parts;
  for (const PValue& v : ops) {
    ASSIGN_OR_RETURN(PValue x, p.Reshard(v, t, ctx));
    parts.push_back(x.id);
  }
  return PValue{p.b().Concatenate(parts, dim), instr.shape, t};
}

}  // namespace

absl::StatusOr<std::optional<PValue>> PartitionDataFormatting(
    SpmdPartitioner& p, const Instruction& instr,
    const std::vector<PValue>& operands, const Sharding& target,
    const PartitionContext& ctx) {
  const auto checkpoint = p.MakeCheckpoint();
  Result r = std::optional<PValue>();
  switch (instr.opcode) {
    case Opcode::kPad: r = PartitionPad(p, instr, operands, target, ctx); break;
    case Opcode::kSlice: r = PartitionSlice(p, instr, operands, target, ctx); break;
    case Opcode::kReverse: r = PartitionReverse(p, instr, operands, target, ctx); break;
    case Opcode::kRotate: r = PartitionRotate(p, instr, operands, target, ctx); break;
    case Opcode::kShift: r = PartitionShift(p, instr, operands, target, ctx); break;
    case Opcode::kReshape: r = PartitionReshape(p, instr, operands, target, ctx); break;
    case Opcode::kConcatenate: r = PartitionConcat(p, instr, operands, target, ctx); break;
    default: break;
  }
  // Halos wider than a shard fall back to the generic path.
  if (!r.ok() && absl::StartsWith(r.status().message(), "HaloTooLarge")) {
    p.Rollback(checkpoint);
    return std::optional<PValue>();
  }
  if (r.ok() && !r->has_value()) p.Rollback(checkpoint);
  return r;
}

}  // namespace shardlab::spmd
