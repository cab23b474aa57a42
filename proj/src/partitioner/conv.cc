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

#include "absl/strings/match.h"
#include "absl/strings/str_cat.h"
#include "shardlab/util/status_macros.h"
#include "src/partitioner/spmd_partitioner.h"

namespace shardlab::spmd {

namespace {

int64_t CeilDiv(int64_t a, int64_t b) { return -FloorDiv(-a, b); }

// Per-dim plan after the input has been realigned.
struct SpatialPlan {
  int64_t out_dim;
  int64_t out_shard;
  std::vector<int64_t> out_offset;  // per coordinate, into the local output
};

absl::StatusOr<PValue> SpatialConv(SpmdPartitioner& p, const Instruction& instr,
                                   const PValue& l, int64_t rhs,
                                   const Sharding& out_sharding,
                                   const PartitionContext& ctx) {
  const ConvDims& cd = instr.attrs.conv;
  const Shape& out = instr.shape;
  const int64_t m = ctx.num_logical();
  const int64_t lrank = l.base.rank();
  std::vector<WindowDim> window = instr.attrs.window;
  const int64_t zero = p.Scalar(l.base.dtype, 0);
  int64_t x = l.id;
  std::vector<SpatialPlan> plans;
  for (size_t i = 0; i < window.size(); ++i) {
    const int64_t ld = cd.lhs_spatial[i];
    const int64_t t = l.sharding.num_tiles(ld);
    if (t == 1) continue;
    const WindowDim w = window[i];
    const int64_t n = l.base.dims[ld];
    const int64_t s_in = CeilOfRatio(n, t);
    const int64_t s_out = CeilOfRatio(out.dims[cd.out_spatial[i]], t);
    const int64_t k_eff = (w.size - 1) * w.window_dilation + 1;
    const int64_t st = w.stride, bd = w.base_dilation, lo = w.padding_low;
    const int64_t span = (s_out - 1) * st + k_eff;
    // Coordinate c needs base elements [a(c), a(c) + width); delta(c) is the
    // dilated-space offset of a(c) past the first needed position.
    std::vector<int64_t> a(t), delta(t);
    int64_t width = 0;
    for (int64_t c = 0; c < t; ++c) {
      const int64_t q0 = c * s_out * st - lo;
      a[c] = CeilDiv(q0, bd);
      delta[c] = a[c] * bd - q0;
      width = std::max(width, FloorDiv(q0 + span - 1, bd) - a[c] + 1);
    }
    width = std::max<int64_t>(width, 1);
    ASSIGN_OR_RETURN(x, p.Realign(x, l.sharding, lrank, ld, s_in, a, width, n,
                                  zero, ctx));
    const int64_t max_delta = *std::max_element(delta.begin(), delta.end());
    const bool uniform = std::all_of(delta.begin(), delta.end(),
                                     [&](int64_t d) { return d == delta[0]; });
    SpatialPlan plan{cd.out_spatial[i], s_out, std::vector<int64_t>(t, 0)};
    WindowDim local = w;
    int64_t elements = width;
    int64_t need = s_out;
    if (uniform) {
      local.padding_low = delta[0];
    } else if (st == 1) {
      local.padding_low = max_delta;
      for (int64_t c = 0; c < t; ++c) plan.out_offset[c] = max_delta - delta[c];
      need = s_out + max_delta;
    } else {
      // Dilate locally, then align every partition to its first needed
      // position so one window configuration fits all.
      std::vector<PaddingDim> padding(lrank);
      padding[ld] = PaddingDim{bd - 1, bd - 1, bd - 1};
      x = p.b().Pad(x, zero, padding);
      elements = width * bd;
      std::vector<int64_t> offsets(m);
      const auto coord = CoordinatesAlong(l.sharding, lrank, ld, m);
      for (int64_t j = 0; j < m; ++j) offsets[j] = bd - 1 - delta[coord[j]];
      std::vector<int64_t> starts(lrank, p.Scalar(DType::kS32, 0));
      starts[ld] = p.PerPartition(offsets, ctx);
      std::vector<int64_t> sizes = p.b().shape(x).dims;
      sizes[ld] = elements;
      x = p.b().DynamicSlice(x, starts, sizes);
      local.padding_low = 0;
      local.base_dilation = 1;
    }
    const int64_t covered =
        local.padding_low + (elements - 1) * local.base_dilation + 1;
    local.padding_high = std::max<int64_t>(0, (need - 1) * st + k_eff - covered);
    window[i] = local;
    plans.push_back(std::move(plan));
  }
  int64_t y = p.b().Convolution(x, rhs, cd, window);
  const int64_t orank = out.rank();
  for (const SpatialPlan& plan : plans) {
    const auto coord = CoordinatesAlong(out_sharding, orank, plan.out_dim, m);
    std::vector<int64_t> offsets(m);
    for (int64_t j = 0; j < m; ++j) offsets[j] = plan.out_offset[coord[j]];
    const bool zero_offset = std::all_of(offsets.begin(), offsets.end(),
                                         [](int64_t o) { return o == 0; });
    if (zero_offset) {
      y = p.TrimTo(y, plan.out_dim, plan.out_shard);
      continue;
    }
    std::vector<int64_t> starts(orank, p.Scalar(DType::kS32, 0));
    starts[plan.out_dim] = p.PerPartition(offsets, ctx);
    std::vector<int64_t> sizes = p.b().shape(y).dims;
    sizes[plan.out_dim] = plan.out_shard;
    y = p.b().DynamicSlice(y, starts, sizes);
  }
  return PValue{y, out, out_sharding};
}

}  // namespace

absl::StatusOr<PValue> PartitionConvolution(SpmdPartitioner& p,
                                            const Instruction& instr,
                                            const PValue& lhs,
                                            const PValue& rhs,
                                            const Sharding& target,
                                            const PartitionContext& ctx) {
  const ConvDims& cd = instr.attrs.conv;
  const std::vector<WindowDim>& window = instr.attrs.window;
  for (size_t i = 0; i < window.size(); ++i) {
    if (window[i].window_dilation > 1 &&
        rhs.sharding.num_tiles(cd.rhs_spatial[i]) > 1) {
      return absl::UnimplementedError(absl::StrCat(
          "UnsupportedConv: ", instr.name,
          " has a partitioned window-dilated kernel"));
    }
  }
  const Shape& out = instr.shape;
  const int64_t orank = out.rank();
  const int64_t lrank = lhs.base.rank();
  const Sharding out_sharding = ReplicateDims(target, orank, {cd.out_feature});
  std::vector<int64_t> out_to_lhs(orank, -1);
  out_to_lhs[cd.out_batch] = cd.lhs_batch;
  for (size_t i = 0; i < cd.out_spatial.size(); ++i) {
    out_to_lhs[cd.out_spatial[i]] = cd.lhs_spatial[i];
  }
  const Sharding lhs_target =
      TransposeShardingDims(out_sharding, orank, out_to_lhs, lrank);
  ASSIGN_OR_RETURN(PValue r, p.Reshard(rhs, Sharding::Replicate(), ctx));
  ASSIGN_OR_RETURN(PValue l, p.Reshard(lhs, lhs_target, ctx));

  const auto checkpoint = p.MakeCheckpoint();
  absl::StatusOr<PValue> y = SpatialConv(p, instr, l, r.id, out_sharding, ctx);
  if (!y.ok()) {
    if (!absl::StartsWith(y.status().message(), "HaloTooLarge")) {
      return y.status();
    }
    // Windows wider than a shard: compute on the full input.
    p.Rollback(checkpoint);
    ASSIGN_OR_RETURN(PValue full, p.Reshard(l, Sharding::Replicate(), ctx));
    const int64_t local =
        p.b().Convolution(full.id, r.id, cd, instr.attrs.window);
    y = PValue{local, out, Sharding::Replicate()};
  }
  return p.Reshard(*y, target, ctx);
}

}  // namespace shardlab::spmd
