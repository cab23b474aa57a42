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

#include "src/partitioner/spmd_partitioner.h"

#include <algorithm>
#include <set>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "shardlab/util/status_macros.h"

namespace shardlab::spmd {

namespace {

std::vector<int64_t> Iota(int64_t n) {
  std::vector<int64_t> v(n);
  for (int64_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::vector<int64_t> Coords(const Sharding& s, int64_t rank, int64_t l) {
  if (s.IsReplicated()) return std::vector<int64_t>(rank, 0);
  return *s.TileCoordinate(l, rank);
}

bool SameCoordsAlong(const Sharding& a, const Sharding& b, int64_t rank,
                     int64_t dim, int64_t m) {
  if (a.num_tiles(dim) != b.num_tiles(dim)) return false;
  return CoordinatesAlong(a, rank, dim, m) == CoordinatesAlong(b, rank, dim, m);
}

// Smallest c in [1, 8] with h(i) = floor((a * i + b) / c) for all i.
std::optional<HaloSpec::Linear> FitLinear(const std::vector<int64_t>& h) {
  if (h.empty()) return std::nullopt;
  if (h.size() == 1) return HaloSpec::Linear{0, h[0], 1};
  for (int64_t c = 1; c <= 8; ++c) {
    const int64_t slope = h[1] - h[0];
    for (int64_t a = c * slope - c; a <= c * slope + c; ++a) {
      for (int64_t b = c * h[0]; b < c * h[0] + c; ++b) {
        bool ok = true;
        for (size_t i = 0; i < h.size() && ok; ++i) {
          ok = FloorDiv(a * static_cast<int64_t>(i) + b, c) == h[i];
        }
        if (ok) return HaloSpec::Linear{a, b, c};
      }
    }
  }
  return std::nullopt;
}

}  // namespace

Shape LocalShape(const Shape& base, const Sharding& sharding) {
  absl::StatusOr<Shape> s = ShardShape(base, sharding);
  return s.ok() ? *s : base;
}

std::vector<int64_t> CoordinatesAlong(const Sharding& s, int64_t rank,
                                      int64_t dim, int64_t num_logical) {
  std::vector<int64_t> out(num_logical, 0);
  if (s.IsReplicated()) return out;
  for (int64_t l = 0; l < num_logical; ++l) out[l] = Coords(s, rank, l)[dim];
  return out;
}

std::vector<std::vector<int64_t>> GroupsAlong(const Sharding& s, int64_t rank,
                                              const std::vector<int64_t>& dims,
                                              int64_t num_logical) {
  std::vector<std::vector<int64_t>> keys;
  std::map<std::vector<int64_t>, std::vector<std::pair<std::vector<int64_t>, int64_t>>>
      members;
  for (int64_t l = 0; l < num_logical; ++l) {
    std::vector<int64_t> c = Coords(s, rank, l);
    std::vector<int64_t> key, along;
    for (int64_t i = 0; i < rank; ++i) {
      if (std::find(dims.begin(), dims.end(), i) != dims.end()) {
        along.push_back(c[i]);
      } else {
        key.push_back(c[i]);
      }
    }
    key.push_back(s.IsReplicated() ? l : s.ReplicaIndex(l).value_or(0));
    if (!members.count(key)) keys.push_back(key);
    members[key].emplace_back(along, l);
  }
  std::vector<std::vector<int64_t>> groups;
  for (const auto& key : keys) {
    auto m = members[key];
    std::sort(m.begin(), m.end());
    std::vector<int64_t> g;
    for (const auto& [along, l] : m) g.push_back(l);
    groups.push_back(std::move(g));
  }
  return groups;
}

double CollectiveCost(const Graph& graph, const Instruction& instr) {
  if (!IsCollective(instr.opcode)) return 0;
  const double bytes = graph.instr(instr.operands[0]).shape.byte_size();
  const double g = instr.attrs.replica_groups.empty()
                       ? 1.0
                       : instr.attrs.replica_groups[0].size();
  switch (instr.opcode) {
    case Opcode::kAllReduce: return 2 * (g - 1) / g * bytes;
    case Opcode::kAllGather: return (g - 1) * bytes;
    case Opcode::kReduceScatter: return (g - 1) / g * bytes;
    case Opcode::kAllToAll: return (g - 1) / g * bytes;
    case Opcode::kCollectivePermute: return bytes;
    default: return 0;
  }
}

SpmdPartitioner::SpmdPartitioner(int64_t num_devices)
    : b_("spmd"), root_(PartitionContext::Root(num_devices)) {}

int64_t SpmdPartitioner::Scalar(DType dtype, double value) {
  const auto key = std::make_pair(static_cast<int>(dtype), value);
  auto it = scalars_.find(key);
  if (it != scalars_.end()) return it->second;
  const int64_t id = b_.ScalarConstant(dtype, value);
  scalars_[key] = id;
  return id;
}

int64_t SpmdPartitioner::PartitionIdOf(const PartitionContext& ctx) {
  auto it = partition_ids_.find(ctx);
  if (it != partition_ids_.end()) return it->second;
  int64_t id;
  if (ctx.is_root()) {
    id = b_.PartitionId();
  } else {
    const int64_t device = PartitionIdOf(root_);
    const int64_t table = b_.S32Table(ctx.LogicalIdTable());
    id = b_.Reshape(b_.DynamicSlice(table, {device}, {1}), {});
  }
  partition_ids_[ctx] = id;
  return id;
}

int64_t SpmdPartitioner::PerPartition(const std::vector<int64_t>& values,
                                      const PartitionContext& ctx) {
  if (std::all_of(values.begin(), values.end(),
                  [&](int64_t v) { return v == values[0]; })) {
    return Scalar(DType::kS32, values[0]);
  }
  const auto key = std::make_pair(ctx, values);
  auto it = tables_.find(key);
  if (it != tables_.end()) return it->second;
  const int64_t pid = PartitionIdOf(ctx);
  const int64_t table = b_.S32Table(values);
  const int64_t id = b_.Reshape(b_.DynamicSlice(table, {pid}, {1}), {});
  tables_[key] = id;
  return id;
}

int64_t SpmdPartitioner::BroadcastScalar(int64_t scalar,
                                         const std::vector<int64_t>& dims) {
  if (dims.empty()) return scalar;
  return b_.BroadcastScalar(scalar, dims);
}

int64_t SpmdPartitioner::Identity(ReduceKind kind, DType dtype) {
  return Scalar(dtype, ReduceIdentity(kind, dtype));
}

int64_t SpmdPartitioner::AllReduce(
    int64_t x, ReduceKind kind,
    const std::vector<std::vector<int64_t>>& logical,
    const PartitionContext& ctx) {
  return b_.AllReduce(x, kind, ctx.PhysicalGroups(logical));
}

int64_t SpmdPartitioner::AllGather(
    int64_t x, int64_t dim, const std::vector<std::vector<int64_t>>& logical,
    const PartitionContext& ctx) {
  return b_.AllGather(x, dim, ctx.PhysicalGroups(logical));
}

int64_t SpmdPartitioner::ReduceScatter(
    int64_t x, ReduceKind kind, int64_t dim,
    const std::vector<std::vector<int64_t>>& logical,
    const PartitionContext& ctx) {
  return b_.ReduceScatter(x, kind, dim, ctx.PhysicalGroups(logical));
}

int64_t SpmdPartitioner::AllToAll(
    int64_t x, int64_t split_dim, int64_t concat_dim,
    const std::vector<std::vector<int64_t>>& logical,
    const PartitionContext& ctx) {
  return b_.AllToAll(x, split_dim, concat_dim, ctx.PhysicalGroups(logical));
}

int64_t SpmdPartitioner::CollectivePermute(
    int64_t x, const std::vector<std::pair<int64_t, int64_t>>& logical,
    const PartitionContext& ctx) {
  return b_.CollectivePermute(x, ctx.PhysicalPairs(logical));
}

int64_t SpmdPartitioner::PadTo(int64_t x, int64_t dim, int64_t size) {
  const Shape shape = b_.shape(x);
  if (shape.dims[dim] >= size) return x;
  std::vector<PaddingDim> padding(shape.rank());
  padding[dim].high = size - shape.dims[dim];
  return b_.Pad(x, Scalar(shape.dtype, 0), padding);
}

int64_t SpmdPartitioner::TrimTo(int64_t x, int64_t dim, int64_t size) {
  if (b_.shape(x).dims[dim] <= size) return x;
  return b_.SliceInDim(x, dim, 0, size);
}

PValue SpmdPartitioner::Refine(const PValue& v, const Sharding& target,
                               const PartitionContext& ctx) {
  const int64_t rank = v.base.rank();
  const int64_t m = ctx.num_logical();
  int64_t x = v.id;
  std::vector<int64_t> starts(rank);
  for (int64_t i = 0; i < rank; ++i) {
    const int64_t t = target.num_tiles(i);
    if (v.sharding.num_tiles(i) == 1 && t > 1) {
      const int64_t s = CeilOfRatio(v.base.dims[i], t);
      x = PadTo(x, i, s * t);
      std::vector<int64_t> offsets = CoordinatesAlong(target, rank, i, m);
      for (int64_t& o : offsets) o *= s;
      starts[i] = PerPartition(offsets, ctx);
    } else {
      starts[i] = Scalar(DType::kS32, 0);
    }
  }
  const int64_t y =
      b_.DynamicSlice(x, starts, LocalShape(v.base, target).dims);
  return PValue{y, v.base, target};
}

absl::StatusOr<PValue> SpmdPartitioner::PermuteTiles(
    const PValue& v, const Sharding& target, const PartitionContext& ctx) {
  const int64_t rank = v.base.rank();
  const int64_t m = ctx.num_logical();
  std::map<std::vector<int64_t>, std::vector<int64_t>> holders;
  for (int64_t l = 0; l < m; ++l) {
    holders[Coords(v.sharding, rank, l)].push_back(l);
  }
  std::map<std::vector<int64_t>, int64_t> requests;
  std::vector<std::vector<std::pair<int64_t, int64_t>>> rounds;
  std::vector<std::set<int64_t>> used;
  std::vector<int64_t> round_of(m, -1);
  for (int64_t l = 0; l < m; ++l) {
    const std::vector<int64_t> want = Coords(target, rank, l);
    if (Coords(v.sharding, rank, l) == want) continue;
    const std::vector<int64_t>& hs = holders[want];
    if (hs.empty()) {
      return absl::InternalError(
          "UnsupportedSharding: permutation source tile missing");
    }
    const int64_t src = hs[requests[want]++ % hs.size()];
    size_t r = 0;
    while (r < rounds.size() && used[r].count(src)) ++r;
    if (r == rounds.size()) {
      rounds.emplace_back();
      used.emplace_back();
    }
    rounds[r].emplace_back(src, l);
    used[r].insert(src);
    round_of[l] = r;
  }
  const std::vector<int64_t> local = LocalShape(v.base, target).dims;
  const bool keeps = std::count(round_of.begin(), round_of.end(), -1) > 0;
  int64_t out = v.id;
  for (size_t r = 0; r < rounds.size(); ++r) {
    const int64_t moved = CollectivePermute(v.id, rounds[r], ctx);
    if (rounds.size() == 1 && !keeps) {
      out = moved;
      break;
    }
    const int64_t pred =
        b_.Compare(PerPartition(round_of, ctx), Scalar(DType::kS32, r),
                   ComparisonDirection::kEq);
    out = b_.Select(BroadcastScalar(pred, local), moved, out);
  }
  return PValue{out, v.base, target};
}

absl::StatusOr<PValue> SpmdPartitioner::Reshard(const PValue& v,
                                                const Sharding& target,
                                                const PartitionContext& ctx) {
  const int64_t rank = v.base.rank();
  const int64_t m = ctx.num_logical();
  const Sharding& s = v.sharding;
  const std::vector<int64_t> all = Iota(m);
  if (SameTiling(s, target, rank, all)) return PValue{v.id, v.base, target};

  bool refines = true;
  bool same_counts = true;
  for (int64_t i = 0; i < rank; ++i) {
    if (s.num_tiles(i) != target.num_tiles(i)) same_counts = false;
    if (s.num_tiles(i) > 1 && !SameCoordsAlong(s, target, rank, i, m)) {
      refines = false;
    }
  }
  if (refines) return Refine(v, target, ctx);
  if (same_counts) return PermuteTiles(v, target, ctx);

  // Move the tiling of one dim to another with a single AllToAll.
  for (int64_t a = 0; a < rank; ++a) {
    const int64_t t = s.num_tiles(a);
    if (t == 1 || target.num_tiles(a) != 1) continue;
    for (int64_t bdim = 0; bdim < rank; ++bdim) {
      if (s.num_tiles(bdim) != 1 || target.num_tiles(bdim) != t) continue;
      const auto groups = GroupsAlong(s, rank, {a}, m);
      int64_t x = PadTo(v.id, bdim, t * CeilOfRatio(v.base.dims[bdim], t));
      x = AllToAll(x, bdim, a, groups, ctx);
      x = TrimTo(x, a, v.base.dims[a]);
      std::vector<int64_t> swap = Iota(rank);
      std::swap(swap[a], swap[bdim]);
      return Reshard(
          PValue{x, v.base, TransposeShardingDims(s, rank, swap, rank)},
          target, ctx);
    }
  }

  // Unshard every dim whose tiling disagrees with the target.
  PValue cur = v;
  for (int64_t a = 0; a < rank; ++a) {
    if (s.num_tiles(a) == 1 || SameCoordsAlong(s, target, rank, a, m)) continue;
    const auto groups = GroupsAlong(cur.sharding, rank, {a}, m);
    int64_t x = AllGather(cur.id, a, groups, ctx);
    x = TrimTo(x, a, v.base.dims[a]);
    cur = PValue{x, v.base, ReplicateDims(cur.sharding, rank, {a})};
  }
  if (cur.id == v.id) {
    return absl::InternalError("UnsupportedSharding: no resharding path");
  }
  return Reshard(cur, target, ctx);
}

int64_t SpmdPartitioner::MaskRange(int64_t x, int64_t dim, int64_t offset,
                                   int64_t lo, int64_t hi, int64_t fill) {
  const Shape shape = b_.shape(x);
  const int64_t iota = b_.Iota(Shape(DType::kS32, shape.dims), dim);
  const int64_t pos = b_.Add(iota, BroadcastScalar(offset, shape.dims));
  const int64_t filler = BroadcastScalar(fill, shape.dims);
  if (lo > std::numeric_limits<int64_t>::min()) {
    const int64_t ge =
        b_.Compare(pos, BroadcastScalar(Scalar(DType::kS32, lo), shape.dims),
                   ComparisonDirection::kGe);
    x = b_.Select(ge, x, filler);
  }
  const int64_t lt =
      b_.Compare(pos, BroadcastScalar(Scalar(DType::kS32, hi), shape.dims),
                 ComparisonDirection::kLt);
  return b_.Select(lt, x, filler);
}

PValue SpmdPartitioner::MaskUneven(const PValue& v, std::vector<int64_t> dims,
                                   int64_t fill, const PartitionContext& ctx) {
  const int64_t rank = v.base.rank();
  if (dims.empty()) dims = Iota(rank);
  int64_t x = v.id;
  for (int64_t i : dims) {
    const int64_t t = v.sharding.num_tiles(i);
    const int64_t n = v.base.dims[i];
    if (t == 1 || n % t == 0) continue;
    std::vector<int64_t> offsets =
        CoordinatesAlong(v.sharding, rank, i, ctx.num_logical());
    for (int64_t& o : offsets) o *= CeilOfRatio(n, t);
    x = MaskRange(x, i, PerPartition(offsets, ctx),
                  std::numeric_limits<int64_t>::min(), n, fill);
  }
  return PValue{x, v.base, v.sharding};
}

absl::StatusOr<int64_t> SpmdPartitioner::Realign(
    int64_t x, const Sharding& s, int64_t rank, int64_t dim, int64_t chunk,
    const std::vector<int64_t>& start, int64_t width,
    std::optional<int64_t> valid_size, int64_t fill,
    const PartitionContext& ctx) {
  const int64_t m = ctx.num_logical();
  const int64_t t = start.size();
  std::vector<int64_t> left(t), right(t);
  int64_t max_left = 0, max_right = 0;
  for (int64_t c = 0; c < t; ++c) {
    left[c] = c * chunk - start[c];
    right[c] = start[c] + width - (c + 1) * chunk;
    max_left = std::max(max_left, left[c]);
    max_right = std::max(max_right, right[c]);
  }
  HaloSpec spec;
  spec.instruction = current_;
  spec.dim = dim;
  spec.left_form = FitLinear(left);
  spec.right_form = FitLinear(right);
  for (int64_t c = 0; c < t; ++c) {
    spec.left.push_back(std::max<int64_t>(left[c], 0));
    spec.right.push_back(std::max<int64_t>(right[c], 0));
  }
  spec.max_left = max_left;
  spec.max_right = max_right;
  spec.masked = valid_size.has_value();
  // Halos reaching past the first or last shard only cover out-of-range
  // positions; they are zero-filled locally instead of exchanged.
  int64_t data_left = 0, data_right = 0;
  for (int64_t c = 1; c < t; ++c) data_left = std::max(data_left, left[c]);
  for (int64_t c = 0; c + 1 < t; ++c) data_right = std::max(data_right, right[c]);
  if (data_left > chunk || data_right > chunk) {
    return absl::InvalidArgumentError(absl::StrCat(
        "HaloTooLarge: halo ", std::max(data_left, data_right),
        " exceeds shard size ", chunk, " along dim ", dim));
  }
  if (max_left > 0 || max_right > 0) halos_.push_back(spec);
  // Exchange the full maximum halo when it fits in a shard.
  if (max_left <= chunk) data_left = max_left;
  if (max_right <= chunk) data_right = max_right;

  const std::vector<int64_t> coord = CoordinatesAlong(s, rank, dim, m);
  // neighbor[c][l]: partition with l's other coordinates at coordinate c.
  std::map<std::pair<std::vector<int64_t>, int64_t>, int64_t> by_coords;
  auto key_of = [&](int64_t l, int64_t c) {
    std::vector<int64_t> k =
        s.IsReplicated() ? std::vector<int64_t>(rank, 0) : *s.TileCoordinate(l, rank);
    k[dim] = c;
    const int64_t rep = s.IsReplicated() ? l : s.ReplicaIndex(l).value_or(0);
    return std::make_pair(k, rep);
  };
  for (int64_t l = 0; l < m; ++l) by_coords[key_of(l, coord[l])] = l;

  int64_t core = x;
  std::vector<int64_t> parts;
  if (data_left > 0) {
    std::vector<std::pair<int64_t, int64_t>> pairs;
    for (int64_t l = 0; l < m; ++l) {
      if (coord[l] > 0) pairs.emplace_back(by_coords[key_of(l, coord[l] - 1)], l);
    }
    const int64_t slab = b_.SliceInDim(core, dim, chunk - data_left, chunk);
    parts.push_back(CollectivePermute(slab, pairs, ctx));
  }
  parts.push_back(core);
  if (data_right > 0) {
    std::vector<std::pair<int64_t, int64_t>> pairs;
    for (int64_t l = 0; l < m; ++l) {
      if (coord[l] < t - 1) {
        pairs.emplace_back(by_coords[key_of(l, coord[l] + 1)], l);
      }
    }
    const int64_t slab = b_.SliceInDim(core, dim, 0, data_right);
    parts.push_back(CollectivePermute(slab, pairs, ctx));
  }
  int64_t joined = parts.size() == 1 ? core : b_.Concatenate(parts, dim);
  if (max_left > data_left || max_right > data_right) {
    std::vector<PaddingDim> padding(rank);
    padding[dim].low = max_left - data_left;
    padding[dim].high = max_right - data_right;
    joined = b_.Pad(joined, Scalar(b_.shape(x).dtype, 0), padding);
  }

  std::vector<int64_t> offsets(m);
  for (int64_t l = 0; l < m; ++l) offsets[l] = max_left - left[coord[l]];
  const bool uniform = std::all_of(offsets.begin(), offsets.end(),
                                   [&](int64_t o) { return o == offsets[0]; });
  int64_t out;
  if (uniform) {
    out = (offsets[0] == 0 && b_.shape(joined).dims[dim] == width)
              ? joined
              : b_.SliceInDim(joined, dim, offsets[0], offsets[0] + width);
  } else {
    const Shape shape = b_.shape(joined);
    std::vector<int64_t> starts(rank, Scalar(DType::kS32, 0));
    starts[dim] = PerPartition(offsets, ctx);
    std::vector<int64_t> sizes = shape.dims;
    sizes[dim] = width;
    out = b_.DynamicSlice(joined, starts, sizes);
  }
  if (valid_size.has_value()) {
    std::vector<int64_t> origin(m);
    for (int64_t l = 0; l < m; ++l) origin[l] = start[coord[l]];
    bool needed = false;
    for (int64_t c = 0; c < t; ++c) {
      if (start[c] < 0 || start[c] + width > *valid_size) needed = true;
    }
    if (needed) {
      out = MaskRange(out, dim, PerPartition(origin, ctx), 0, *valid_size, fill);
    }
  }
  return out;
}

SpmdPartitioner::Checkpoint SpmdPartitioner::MakeCheckpoint() const {
  return Checkpoint{b_.MakeCheckpoint(), halos_.size()};
}

void SpmdPartitioner::Rollback(const Checkpoint& checkpoint) {
  b_.Rollback(checkpoint.builder);
  halos_.resize(checkpoint.halos);
  const int64_t size = checkpoint.builder.size;
  std::erase_if(scalars_, [&](const auto& e) { return e.second >= size; });
  std::erase_if(partition_ids_, [&](const auto& e) { return e.second >= size; });
  std::erase_if(tables_, [&](const auto& e) { return e.second >= size; });
}

double SpmdPartitioner::CostSince(const Checkpoint& checkpoint) const {
  double cost = 0;
  for (int64_t i = checkpoint.builder.size; i < b_.size(); ++i) {
    cost += CollectiveCost(b_.graph(), b_.instr(i));
  }
  return cost;
}

}  // namespace shardlab::spmd
