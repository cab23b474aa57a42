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

#include "shardlab/propagation/rules.h"

#include <algorithm>

namespace shardlab {

namespace {

using DimMap = std::vector<int64_t>;

DimMap Identity(int64_t rank) {
  DimMap m(rank);
  for (int64_t i = 0; i < rank; ++i) m[i] = i;
  return m;
}

// For operand `k` of instruction `id`: the result dim each operand dim
// becomes, or -1 when that dim does not survive. nullopt when the operand
// shares no dims with the result (scalars such as pad values or indices).
std::optional<DimMap> OperandToResult(const Graph& graph, int64_t id,
                                      int64_t k) {
  const Instruction& instr = graph.instr(id);
  const Shape& in = graph.instr(instr.operands[k]).shape;
  const int64_t rank = in.rank();
  const Attrs& a = instr.attrs;
  if (IsElementwise(instr.opcode)) return Identity(rank);
  switch (instr.opcode) {
    case Opcode::kBroadcast:
      return a.dims;
    case Opcode::kTranspose: {
      DimMap m(rank);
      for (int64_t i = 0; i < rank; ++i) m[a.dims[i]] = i;
      return m;
    }
    case Opcode::kReverse:
      return Identity(rank);
    case Opcode::kRotate:
    case Opcode::kShift:
      if (k != 0) return std::nullopt;
      return Identity(rank);
    case Opcode::kPad: {
      if (k != 0) return std::nullopt;
      DimMap m = Identity(rank);
      for (int64_t i = 0; i < rank; ++i) {
        if (!(a.padding[i] == PaddingDim{})) m[i] = -1;
      }
      return m;
    }
    case Opcode::kSlice: {
      DimMap m = Identity(rank);
      for (int64_t i = 0; i < rank; ++i) {
        const SliceDim& s = a.slice[i];
        if (s.start != 0 || s.limit != in.dims[i] || s.stride != 1) m[i] = -1;
      }
      return m;
    }
    case Opcode::kDynamicSlice: {
      if (k != 0) return std::nullopt;
      DimMap m = Identity(rank);
      for (int64_t i = 0; i < rank; ++i) {
        if (a.dims[i] != in.dims[i]) m[i] = -1;
      }
      return m;
    }
    case Opcode::kDynamicUpdateSlice: {
      if (k > 1) return std::nullopt;
      DimMap m = Identity(rank);
      if (k == 1) {
        for (int64_t i = 0; i < rank; ++i) {
          if (in.dims[i] != instr.shape.dims[i]) m[i] = -1;
        }
      }
      return m;
    }
    case Opcode::kConcatenate: {
      DimMap m = Identity(rank);
      m[a.dimension] = -1;
      return m;
    }
    case Opcode::kReduce: {
      if (k != 0) return std::nullopt;
      DimMap m(rank);
      int64_t next = 0;
      for (int64_t i = 0; i < rank; ++i) {
        const bool reduced =
            std::find(a.dims.begin(), a.dims.end(), i) != a.dims.end();
        m[i] = reduced ? -1 : next++;
      }
      return m;
    }
    case Opcode::kDot: {
      const DotDims& d = a.dot;
      const auto& batch = k == 0 ? d.lhs_batch : d.rhs_batch;
      const auto& contracting = k == 0 ? d.lhs_contracting : d.rhs_contracting;
      DimMap m(rank, -1);
      for (size_t b = 0; b < batch.size(); ++b) m[batch[b]] = b;
      int64_t next = batch.size();
      if (k == 1) {
        const Shape& lhs = graph.instr(instr.operands[0]).shape;
        next += lhs.rank() - d.lhs_batch.size() - d.lhs_contracting.size();
      }
      for (int64_t i = 0; i < rank; ++i) {
        const bool used =
            std::find(batch.begin(), batch.end(), i) != batch.end() ||
            std::find(contracting.begin(), contracting.end(), i) !=
                contracting.end();
        if (!used) m[i] = next++;
      }
      return m;
    }
    case Opcode::kConvolution: {
      const ConvDims& c = a.conv;
      DimMap m(rank, -1);
      if (k == 0) {
        m[c.lhs_batch] = c.out_batch;
        for (size_t s = 0; s < c.lhs_spatial.size(); ++s) {
          m[c.lhs_spatial[s]] = c.out_spatial[s];
        }
      } else {
        m[c.rhs_output_feature] = c.out_feature;
      }
      return m;
    }
    default:
      return std::nullopt;
  }
}

// Merges candidates; on conflict falls back to the one with the most tiles
// (earliest wins ties).
std::optional<Sharding> Combine(const std::vector<Sharding>& candidates,
                                int64_t rank) {
  if (candidates.empty()) return std::nullopt;
  std::optional<Sharding> merged = candidates[0];
  for (size_t i = 1; i < candidates.size() && merged.has_value(); ++i) {
    merged = MergeShardings(*merged, candidates[i], rank);
  }
  if (merged.has_value()) return merged;
  const Sharding* best = &candidates[0];
  for (const Sharding& c : candidates) {
    if (c.total_tiles() > best->total_tiles()) best = &c;
  }
  return *best;
}

struct DimGroup {
  std::vector<int64_t> from;
  std::vector<int64_t> to;
};

std::vector<DimGroup> ReshapeGroups(absl::Span<const int64_t> from,
                                    absl::Span<const int64_t> to) {
  std::vector<DimGroup> groups;
  size_t i = 0, j = 0;
  while (i < from.size() || j < to.size()) {
    DimGroup g;
    int64_t pi = 1, po = 1;
    if (i < from.size()) pi *= from[g.from.emplace_back(i++)];
    if (j < to.size()) po *= to[g.to.emplace_back(j++)];
    while (pi != po) {
      if (pi < po && i < from.size()) {
        pi *= from[g.from.emplace_back(i++)];
      } else if (po < pi && j < to.size()) {
        po *= to[g.to.emplace_back(j++)];
      } else {
        return {};
      }
    }
    groups.push_back(std::move(g));
  }
  return groups;
}

// Total tiles when the group's tiling is a contiguous major-to-minor split:
// leading dims fully tiled, at most one evenly split dim, then untiled.
std::optional<int64_t> ContiguousTiles(absl::Span<const int64_t> dims,
                                       absl::Span<const int64_t> tiles) {
  int64_t total = 1;
  bool split_seen = false;
  for (size_t i = 0; i < dims.size(); ++i) {
    if (split_seen) {
      if (tiles[i] != 1) return std::nullopt;
      continue;
    }
    total *= tiles[i];
    if (tiles[i] != dims[i]) {
      if (dims[i] % tiles[i] != 0) return std::nullopt;
      split_seen = true;
    }
  }
  return total;
}

std::optional<std::vector<int64_t>> DistributeTiles(
    int64_t total, absl::Span<const int64_t> dims) {
  std::vector<int64_t> tiles(dims.size(), 1);
  for (size_t i = 0; i < dims.size() && total > 1; ++i) {
    if (total % dims[i] == 0) {
      tiles[i] = dims[i];
      total /= dims[i];
    } else if (dims[i] % total == 0) {
      tiles[i] = total;
      total = 1;
    } else {
      return std::nullopt;
    }
  }
  if (total != 1) return std::nullopt;
  return tiles;
}

}  // namespace

Sharding ReshapeSharding(const Sharding& sharding,
                         absl::Span<const int64_t> from,
                         absl::Span<const int64_t> to) {
  if (sharding.IsReplicated()) return sharding;
  const int64_t from_rank = from.size();
  if (Product(from) == 0) return Sharding::Replicate();
  std::vector<DimGroup> groups = ReshapeGroups(from, to);
  if (groups.empty()) return Sharding::Replicate();

  auto group_tiles = [&](const Sharding& s, const DimGroup& g)
      -> std::optional<std::vector<int64_t>> {
    std::vector<int64_t> dims, tiles;
    for (int64_t d : g.from) {
      dims.push_back(from[d]);
      tiles.push_back(s.num_tiles(d));
    }
    std::optional<int64_t> total = ContiguousTiles(dims, tiles);
    if (!total.has_value()) return std::nullopt;
    std::vector<int64_t> out_dims;
    for (int64_t d : g.to) out_dims.push_back(to[d]);
    return DistributeTiles(*total, out_dims);
  };

  std::vector<int64_t> drop;
  for (const DimGroup& g : groups) {
    if (!group_tiles(sharding, g).has_value()) {
      drop.insert(drop.end(), g.from.begin(), g.from.end());
    }
  }
  const Sharding s =
      drop.empty() ? sharding : ReplicateDims(sharding, from_rank, drop);
  if (s.IsReplicated()) return s;

  // Splitting or fusing tile dims inside contiguous groups keeps the
  // row-major device order, so the device list carries over unchanged.
  std::vector<int64_t> counts;
  for (const DimGroup& g : groups) {
    std::vector<int64_t> t = *group_tiles(s, g);
    counts.insert(counts.end(), t.begin(), t.end());
  }
  counts.push_back(s.replication_size());
  absl::StatusOr<Sharding> out = Sharding::PartialTile(counts, s.devices());
  return out.ok() ? *out : Sharding::Replicate();
}

std::optional<int> RuleTier(Opcode opcode, Direction direction) {
  const bool fwd = direction == Direction::kForward;
  if (IsElementwise(opcode)) return 0;
  switch (opcode) {
    case Opcode::kBroadcast:
      return fwd ? 4 : 1;
    case Opcode::kReduce:
      return fwd ? 1 : 2;
    case Opcode::kTranspose:
    case Opcode::kReverse:
    case Opcode::kPad:
    case Opcode::kSlice:
    case Opcode::kConcatenate:
    case Opcode::kRotate:
    case Opcode::kShift:
    case Opcode::kDynamicSlice:
    case Opcode::kDynamicUpdateSlice:
      return 1;
    case Opcode::kDot:
    case Opcode::kConvolution:
      return 2;
    case Opcode::kReshape:
      return 3;
    default:
      return std::nullopt;
  }
}

std::optional<Sharding> InferForward(
    const Graph& graph, int64_t id,
    absl::Span<const std::optional<Sharding>> operand_shardings) {
  const Instruction& instr = graph.instr(id);
  const int64_t rank = instr.shape.rank();
  if (instr.opcode == Opcode::kReshape) {
    if (!operand_shardings[0].has_value()) return std::nullopt;
    return ReshapeSharding(*operand_shardings[0],
                           graph.instr(instr.operands[0]).shape.dims,
                           instr.shape.dims);
  }
  std::vector<Sharding> candidates;
  for (size_t k = 0; k < instr.operands.size(); ++k) {
    if (!operand_shardings[k].has_value()) continue;
    std::optional<DimMap> map = OperandToResult(graph, id, k);
    if (!map.has_value()) continue;
    const int64_t op_rank = graph.instr(instr.operands[k]).shape.rank();
    candidates.push_back(
        TransposeShardingDims(*operand_shardings[k], op_rank, *map, rank));
  }
  return Combine(candidates, rank);
}

std::optional<Sharding> InferBackward(const Graph& graph, int64_t id,
                                      const Sharding& result,
                                      int64_t operand_index) {
  const Instruction& instr = graph.instr(id);
  const Shape& operand = graph.instr(instr.operands[operand_index]).shape;
  if (instr.opcode == Opcode::kReshape) {
    return ReshapeSharding(result, instr.shape.dims, operand.dims);
  }
  std::optional<DimMap> map = OperandToResult(graph, id, operand_index);
  if (!map.has_value()) return std::nullopt;
  DimMap inverse(instr.shape.rank(), -1);
  for (int64_t i = 0; i < operand.rank(); ++i) {
    if ((*map)[i] >= 0) inverse[(*map)[i]] = i;
  }
  return TransposeShardingDims(result, instr.shape.rank(), inverse,
                               operand.rank());
}

}  // namespace shardlab
