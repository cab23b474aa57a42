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

namespace shardlab {

namespace {

// Slice that is full-range on every dim except `dim`; returns that dim.
std::optional<int64_t> SingleDimSlice(const Instruction& s, const Shape& in) {
  if (s.opcode != Opcode::kSlice) return std::nullopt;
  std::optional<int64_t> dim;
  for (int64_t d = 0; d < in.rank(); ++d) {
    const SliceDim& sd = s.attrs.slice[d];
    if (sd.stride != 1) return std::nullopt;
    if (sd.start == 0 && sd.limit == in.dims[d]) continue;
    if (dim.has_value()) return std::nullopt;
    dim = d;
  }
  return dim;
}

bool MatchRotate(const Graph& g, const Instruction& concat, int64_t* operand,
                 int64_t* dim, int64_t* amount) {
  if (concat.opcode != Opcode::kConcatenate || concat.operands.size() != 2) {
    return false;
  }
  const Instruction& hi = g.instr(concat.operands[0]);
  const Instruction& lo = g.instr(concat.operands[1]);
  if (hi.opcode != Opcode::kSlice || lo.opcode != Opcode::kSlice ||
      hi.operands[0] != lo.operands[0]) {
    return false;
  }
  const Shape& in = g.instr(hi.operands[0]).shape;
  const int64_t d = concat.attrs.dimension;
  const int64_t n = in.dims[d];
  auto dh = SingleDimSlice(hi, in), dl = SingleDimSlice(lo, in);
  if (dh.value_or(d) != d || dl.value_or(d) != d) return false;
  const SliceDim& h = hi.attrs.slice[d];
  const SliceDim& l = lo.attrs.slice[d];
  if (h.limit != n || l.start != 0 || l.limit != h.start) return false;
  *operand = hi.operands[0];
  *dim = d;
  *amount = h.start;
  return true;
}

bool MatchShift(const Graph& g, const Instruction& slice, int64_t* operand,
                int64_t* fill, int64_t* dim, int64_t* amount) {
  if (slice.opcode != Opcode::kSlice) return false;
  const Instruction& pad = g.instr(slice.operands[0]);
  if (pad.opcode != Opcode::kPad) return false;
  const Shape& x = g.instr(pad.operands[0]).shape;
  if (slice.shape.dims != x.dims) return false;
  std::optional<int64_t> d = SingleDimSlice(slice, pad.shape);
  for (int64_t i = 0; i < x.rank(); ++i) {
    const PaddingDim& p = pad.attrs.padding[i];
    if (p.interior != 0) return false;
    if ((p.low != 0 || p.high != 0) && (!d.has_value() || i != *d)) return false;
  }
  if (!d.has_value()) return false;
  *operand = pad.operands[0];
  *fill = pad.operands[1];
  *dim = *d;
  *amount = pad.attrs.padding[*d].low - slice.attrs.slice[*d].start;
  return true;
}

}  // namespace

Graph DetectAndRotate(const Graph& graph) {
  Graph g = graph;
  bool changed = false;
  for (Instruction& instr : g.instructions) {
    int64_t operand, fill, dim, amount;
    if (MatchRotate(g, instr, &operand, &dim, &amount)) {
      Attrs attrs;
      attrs.dimension = dim;
      attrs.amount = amount;
      instr.opcode = Opcode::kRotate;
      instr.operands = {operand};
      instr.attrs = attrs;
      changed = true;
    } else if (MatchShift(g, instr, &operand, &fill, &dim, &amount)) {
      Attrs attrs;
      attrs.dimension = dim;
      attrs.amount = amount;
      instr.opcode = Opcode::kShift;
      instr.operands = {operand, fill};
      instr.attrs = attrs;
      changed = true;
    }
  }
  return changed ? RemoveDeadCode(g) : g;
}

}  // namespace shardlab
