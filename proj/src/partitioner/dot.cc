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
#include <limits>
#include <map>
#include <tuple>

#include "shardlab/util/status_macros.h"
#include "src/partitioner/spmd_partitioner.h"

namespace shardlab::spmd {

namespace {

// Iteration space of a dot: [batch, lhs free, rhs free, contracting].
struct Space {
  int64_t rank = 0;
  int64_t out_rank = 0;
  std::vector<int64_t> lhs_to_iter, rhs_to_iter;
  std::vector<int64_t> iter_to_lhs, iter_to_rhs, iter_to_out, out_to_iter;
  std::vector<int64_t> contracting;  // iteration dims
  std::vector<int64_t> lhs_contracting, rhs_contracting;
  // Per iteration dim: 0 batch, 1 lhs free, 2 rhs free, 3 contracting.
  std::vector<int> kind;
};

std::vector<int64_t> FreeDims(int64_t rank, const std::vector<int64_t>& a,
                              const std::vector<int64_t>& b) {
  std::vector<int64_t> out;
  for (int64_t i = 0; i < rank; ++i) {
    if (std::find(a.begin(), a.end(), i) == a.end() &&
        std::find(b.begin(), b.end(), i) == b.end()) {
      out.push_back(i);
    }
  }
  return out;
}

Space MakeSpace(const DotDims& d, int64_t lhs_rank, int64_t rhs_rank) {
  Space s;
  const auto lf = FreeDims(lhs_rank, d.lhs_batch, d.lhs_contracting);
  const auto rf = FreeDims(rhs_rank, d.rhs_batch, d.rhs_contracting);
  const int64_t nb = d.lhs_batch.size();
  s.out_rank = nb + lf.size() + rf.size();
  s.rank = s.out_rank + d.lhs_contracting.size();
  s.lhs_to_iter.assign(lhs_rank, -1);
  s.rhs_to_iter.assign(rhs_rank, -1);
  s.kind.assign(s.rank, 0);
  for (int64_t i = 0; i < nb; ++i) {
    s.lhs_to_iter[d.lhs_batch[i]] = i;
    s.rhs_to_iter[d.rhs_batch[i]] = i;
  }
  for (size_t j = 0; j < lf.size(); ++j) {
    s.lhs_to_iter[lf[j]] = nb + j;
    s.kind[nb + j] = 1;
  }
  for (size_t j = 0; j < rf.size(); ++j) {
    s.rhs_to_iter[rf[j]] = nb + lf.size() + j;
    s.kind[nb + lf.size() + j] = 2;
  }
  for (size_t k = 0; k < d.lhs_contracting.size(); ++k) {
    const int64_t it = s.out_rank + k;
    s.lhs_to_iter[d.lhs_contracting[k]] = it;
    s.rhs_to_iter[d.rhs_contracting[k]] = it;
    s.contracting.push_back(it);
    s.kind[it] = 3;
  }
  s.lhs_contracting = d.lhs_contracting;
  s.rhs_contracting = d.rhs_contracting;
  s.iter_to_lhs.assign(s.rank, -1);
  s.iter_to_rhs.assign(s.rank, -1);
  s.iter_to_out.assign(s.rank, -1);
  for (int64_t i = 0; i < lhs_rank; ++i) s.iter_to_lhs[s.lhs_to_iter[i]] = i;
  for (int64_t i = 0; i < rhs_rank; ++i) s.iter_to_rhs[s.rhs_to_iter[i]] = i;
  for (int64_t i = 0; i < s.out_rank; ++i) {
    s.iter_to_out[i] = i;
    s.out_to_iter.push_back(i);
  }
  return s;
}

std::vector<int64_t> AllLogical(int64_t m) {
  std::vector<int64_t> v(m);
  for (int64_t i = 0; i < m; ++i) v[i] = i;
  return v;
}

std::vector<int64_t> CoordsOf(const Sharding& s, int64_t rank, int64_t l) {
  if (s.IsReplicated()) return std::vector<int64_t>(rank, 0);
  return *s.TileCoordinate(l, rank);
}

struct Operands {
  DotDims dims;
  Shape out;
};

absl::StatusOr<PValue> DotImpl(SpmdPartitioner& p, const Operands& op,
                               const PValue& lhs, const PValue& rhs,
                               const Sharding& target,
                               const PartitionContext& ctx);

// Local dot under iteration-space sharding `s`, then the result moved to
// `target`.
absl::StatusOr<PValue> FlatDot(SpmdPartitioner& p, const Space& sp,
                               const Operands& op, const PValue& lhs,
                               const PValue& rhs, const Sharding& s,
                               const Sharding& target,
                               const PartitionContext& ctx) {
  const int64_t m = ctx.num_logical();
  const int64_t lr = lhs.base.rank(), rr = rhs.base.rank();
  ASSIGN_OR_RETURN(PValue l,
                   p.Reshard(lhs, TransposeShardingDims(s, sp.rank, sp.iter_to_lhs, lr), ctx));
  ASSIGN_OR_RETURN(PValue r,
                   p.Reshard(rhs, TransposeShardingDims(s, sp.rank, sp.iter_to_rhs, rr), ctx));
  std::vector<int64_t> cdims;
  for (int64_t c : sp.contracting) {
    if (s.num_tiles(c) > 1) cdims.push_back(c);
  }
  if (!cdims.empty()) {
    l = p.MaskUneven(l, sp.lhs_contracting, p.Scalar(lhs.base.dtype, 0), ctx);
    r = p.MaskUneven(r, sp.rhs_contracting, p.Scalar(rhs.base.dtype, 0), ctx);
  }
  const int64_t local = p.b().Dot(l.id, r.id, op.dims);
  const Sharding out_s =
      TransposeShardingDims(s, sp.rank, sp.iter_to_out, sp.out_rank);
  if (cdims.empty()) return p.Reshard(PValue{local, op.out, out_s}, target, ctx);

  const auto groups = GroupsAlong(s, sp.rank, cdims, m);
  if (cdims.size() == 1) {
    const int64_t g = s.num_tiles(cdims[0]);
    for (int64_t e = 0; e < sp.out_rank; ++e) {
      if (s.num_tiles(e) != 1 || target.num_tiles(e) != g) continue;
      std::vector<int64_t> map = sp.iter_to_out;
      map[cdims[0]] = e;
      const Sharding scattered =
          TransposeShardingDims(s, sp.rank, map, sp.out_rank);
      if (!SameTiling(scattered, target, sp.out_rank, AllLogical(m))) continue;
      const int64_t x =
          p.PadTo(local, e, g * CeilOfRatio(op.out.dims[e], g));
      const int64_t rs = p.ReduceScatter(x, ReduceKind::kSum, e, groups, ctx);
      return PValue{rs, op.out, target};
    }
  }
  const int64_t ar = p.AllReduce(local, ReduceKind::kSum, groups, ctx);
  return p.Reshard(PValue{ar, op.out, out_s}, target, ctx);
}

bool SameCoordsOn(const Sharding& a, const Sharding& b, int64_t rank,
                  int64_t dim, int64_t m) {
  return a.num_tiles(dim) == b.num_tiles(dim) &&
         CoordinatesAlong(a, rank, dim, m) == CoordinatesAlong(b, rank, dim, m);
}

struct Grouping {
  std::vector<std::vector<int64_t>> logical_groups;
  Sharding lhs, rhs, out;  // child shardings, iteration space
};

// Groups partitions by their coordinates on `dims` (tiled identically in
// every sharding that has them) and re-expresses the remaining tiling of each
// sharding over child logical ids. nullopt when some sharding's remaining
// tiling differs between groups.
std::optional<Grouping> GroupOn(const Space& sp, const std::vector<int64_t>& dims,
                                const Sharding& ml, const Sharding& mr,
                                const Sharding& mo, int64_t m) {
  const int64_t rank = sp.rank;
  auto on = [&](int64_t d) {
    return std::find(dims.begin(), dims.end(), d) != dims.end();
  };
  const Sharding* owner[3] = {&mo, &ml, &mr};
  std::map<std::vector<int64_t>, std::vector<std::tuple<std::vector<int64_t>, int64_t>>>
      groups;
  for (int64_t l = 0; l < m; ++l) {
    std::vector<int64_t> key, rest;
    for (int64_t d : dims) {
      for (const Sharding* s : owner) {
        if (s->num_tiles(d) > 1) {
          key.push_back(CoordsOf(*s, rank, l)[d]);
          break;
        }
      }
    }
    for (const Sharding* s : owner) {
      const auto c = CoordsOf(*s, rank, l);
      for (int64_t d = 0; d < rank; ++d) {
        if (!on(d)) rest.push_back(c[d]);
      }
    }
    groups[key].emplace_back(rest, l);
  }
  Grouping g;
  size_t size = 0;
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end());
    if (size == 0) size = members.size();
    if (members.size() != size) return std::nullopt;
    std::vector<int64_t> ids;
    for (const auto& [rest, l] : members) ids.push_back(l);
    g.logical_groups.push_back(std::move(ids));
  }
  if (g.logical_groups.size() < 2) return std::nullopt;
  std::vector<int64_t> child(size);
  for (size_t i = 0; i < size; ++i) child[i] = i;
  auto to_child = [&](const Sharding& s) -> std::optional<Sharding> {
    if (s.IsReplicated()) return s;
    std::vector<int64_t> counts(rank, 1);
    for (int64_t d = 0; d < rank; ++d) {
      if (!on(d)) counts[d] = s.num_tiles(d);
    }
    for (const auto& group : g.logical_groups) {
      for (size_t k = 0; k < size; ++k) {
        const auto a = CoordsOf(s, rank, group[k]);
        const auto b = CoordsOf(s, rank, g.logical_groups[0][k]);
        for (int64_t d = 0; d < rank; ++d) {
          if (!on(d) && a[d] != b[d]) return std::nullopt;
        }
      }
    }
    return ShardingFromCoordinates(counts, child, [&](int64_t k) {
      auto c = CoordsOf(s, rank, g.logical_groups[0][k]);
      for (int64_t d = 0; d < rank; ++d) {
        if (on(d)) c[d] = 0;
      }
      return c;
    });
  };
  auto l = to_child(ml), r = to_child(mr), o = to_child(mo);
  if (!l || !r || !o) return std::nullopt;
  g.lhs = *l;
  g.rhs = *r;
  g.out = *o;
  return g;
}

// Dims whose tiling is shared by every value that has them: batch dims tiled
// alike in both operands and the result, free dims tiled alike in their
// operand and the result.
std::vector<int64_t> MatchedDims(const Space& sp, const Sharding& ml,
                                 const Sharding& mr, const Sharding& mo,
                                 int64_t m) {
  std::vector<int64_t> out;
  for (int64_t d = 0; d < sp.out_rank; ++d) {
    if (mo.num_tiles(d) == 1) continue;
    const bool lhs_ok = sp.kind[d] == 2 || SameCoordsOn(ml, mo, sp.rank, d, m);
    const bool rhs_ok = sp.kind[d] == 1 || SameCoordsOn(mr, mo, sp.rank, d, m);
    if (lhs_ok && rhs_ok) out.push_back(d);
  }
  return out;
}

Shape Shrink(const Shape& base, const Sharding& s, const std::vector<int64_t>& to_iter,
             const std::vector<int64_t>& dims) {
  Shape out = base;
  for (int64_t i = 0; i < base.rank(); ++i) {
    if (std::find(dims.begin(), dims.end(), to_iter[i]) != dims.end()) {
      out.dims[i] = CeilOfRatio(base.dims[i], s.num_tiles(i));
    }
  }
  return out;
}

absl::StatusOr<std::optional<PValue>> TryRecursive(
    SpmdPartitioner& p, const Space& sp, const Operands& op, const PValue& lhs,
    const PValue& rhs, const Sharding& target, const PartitionContext& ctx) {
  const int64_t m = ctx.num_logical();
  const Sharding ml = TransposeShardingDims(lhs.sharding, lhs.base.rank(),
                                            sp.lhs_to_iter, sp.rank);
  const Sharding mr = TransposeShardingDims(rhs.sharding, rhs.base.rank(),
                                            sp.rhs_to_iter, sp.rank);
  const Sharding mo =
      TransposeShardingDims(target, sp.out_rank, sp.out_to_iter, sp.rank);
  const std::vector<int64_t> candidates = MatchedDims(sp, ml, mr, mo, m);
  // Greedily keep each matched dim that still allows a consistent grouping.
  std::vector<int64_t> dims;
  std::optional<Grouping> best;
  for (int64_t d : candidates) {
    std::vector<int64_t> trial = dims;
    trial.push_back(d);
    auto g = GroupOn(sp, trial, ml, mr, mo, m);
    if (!g) continue;
    dims = trial;
    best = std::move(g);
  }
  if (!best) return std::optional<PValue>();
  if (best->lhs.IsReplicated() && best->rhs.IsReplicated() &&
      best->out.IsReplicated()) {
    return std::optional<PValue>();  // nothing left to partition inside
  }
  for (const Sharding* s : {&best->lhs, &best->rhs, &best->out}) {
    if (!s->IsReplicated() && s->total_tiles() * s->replication_size() !=
                                  static_cast<int64_t>(best->logical_groups[0].size())) {
      return std::optional<PValue>();
    }
  }
  const PartitionContext child = ctx.Group(best->logical_groups);
  const int64_t lr = lhs.base.rank(), rr = rhs.base.rank();
  const Shape lbase = Shrink(lhs.base, lhs.sharding, sp.lhs_to_iter, dims);
  const Shape rbase = Shrink(rhs.base, rhs.sharding, sp.rhs_to_iter, dims);
  const Shape obase = Shrink(op.out, target, sp.out_to_iter, dims);
  PValue il{lhs.id, lbase,
            TransposeShardingDims(best->lhs, sp.rank, sp.iter_to_lhs, lr)};
  PValue ir{rhs.id, rbase,
            TransposeShardingDims(best->rhs, sp.rank, sp.iter_to_rhs, rr)};
  const Sharding it =
      TransposeShardingDims(best->out, sp.rank, sp.iter_to_out, sp.out_rank);
  ASSIGN_OR_RETURN(PValue inner,
                   DotImpl(p, Operands{op.dims, obase}, il, ir, it, child));
  return std::optional<PValue>(PValue{inner.id, op.out, target});
}

absl::StatusOr<PValue> DotImpl(SpmdPartitioner& p, const Operands& op,
                               const PValue& lhs, const PValue& rhs,
                               const Sharding& target,
                               const PartitionContext& ctx) {
  const Space sp = MakeSpace(op.dims, lhs.base.rank(), rhs.base.rank());
  ASSIGN_OR_RETURN(std::optional<PValue> nested,
                   TryRecursive(p, sp, op, lhs, rhs, target, ctx));
  if (nested.has_value()) return *nested;

  const Sharding ml = TransposeShardingDims(lhs.sharding, lhs.base.rank(),
                                            sp.lhs_to_iter, sp.rank);
  const Sharding mr = TransposeShardingDims(rhs.sharding, rhs.base.rank(),
                                            sp.rhs_to_iter, sp.rank);
  const Sharding mo =
      TransposeShardingDims(target, sp.out_rank, sp.out_to_iter, sp.rank);
  if (auto both = MergeShardings(ml, mr, sp.rank)) {
    return FlatDot(p, sp, op, lhs, rhs, *both, target, ctx);
  }
  std::vector<Sharding> candidates;
  auto add = [&](std::optional<Sharding> s) {
    if (!s) return;
    for (const Sharding& c : candidates) {
      if (SameTiling(c, *s, sp.rank, AllLogical(ctx.num_logical()))) return;
    }
    candidates.push_back(*s);
  };
  add(MergeShardings(mo, ml, sp.rank));
  add(MergeShardings(mo, mr, sp.rank));
  add(mo);
  add(ml);
  add(mr);
  add(Sharding::Replicate());
  double best_cost = std::numeric_limits<double>::infinity();
  std::optional<Sharding> best;
  for (const Sharding& s : candidates) {
    const auto checkpoint = p.MakeCheckpoint();
    absl::StatusOr<PValue> r = FlatDot(p, sp, op, lhs, rhs, s, target, ctx);
    const double cost = p.b().ok() && r.ok()
                            ? p.CostSince(checkpoint)
                            : std::numeric_limits<double>::infinity();
    p.Rollback(checkpoint);
    if (cost < best_cost) {
      best_cost = cost;
      best = s;
    }
  }
  if (!best) best = Sharding::Replicate();
  return FlatDot(p, sp, op, lhs, rhs, *best, target, ctx);
}

}  // namespace

absl::StatusOr<PValue> PartitionDot(SpmdPartitioner& p,
                                    const Instruction& instr,
                                    const PValue& lhs, const PValue& rhs,
                                    const Sharding& target,
                                    const PartitionContext& ctx) {
  return DotImpl(p, Operands{instr.attrs.dot, instr.shape}, lhs, rhs, target,
                 ctx);
}

}  // namespace shardlab::spmd
