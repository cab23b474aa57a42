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

#include "shardlab/ir/shape_inference.h"

#include <algorithm>
#include <set>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"

namespace shardlab {

namespace {

template <typename... Args>
absl::Status Incompatible(Opcode opcode, const Args&... args) {
  return absl::InvalidArgumentError(
      absl::StrCat("IncompatibleShapes: ", OpcodeName(opcode), ": ", args...));
}

bool IsPermutation(absl::Span<const int64_t> perm, int64_t rank) {
  if (static_cast<int64_t>(perm.size()) != rank) return false;
  std::vector<bool> seen(rank, false);
  for (int64_t p : perm) {
    if (p < 0 || p >= rank || seen[p]) return false;
    seen[p] = true;
  }
  return true;
}

bool DistinctInRange(absl::Span<const int64_t> dims, int64_t rank) {
  std::set<int64_t> seen;
  for (int64_t d : dims) {
    if (d < 0 || d >= rank || !seen.insert(d).second) return false;
  }
  return true;
}

bool IsScalar(const Shape& s) { return s.rank() == 0; }

absl::Status CheckGroups(Opcode opcode,
                         const std::vector<std::vector<int64_t>>& groups,
                         int64_t* group_size) {
  if (groups.empty()) {
    return Incompatible(opcode, "replica_groups must not be empty");
  }
  *group_size = groups[0].size();
  for (const auto& g : groups) {
    if (static_cast<int64_t>(g.size()) != *group_size || g.empty()) {
      return Incompatible(opcode, "replica groups must have equal size");
    }
  }
  return absl::OkStatus();
}

absl::StatusOr<Shape> InferDot(absl::Span<const Shape> ops,
                               const DotDims& d) {
  const Shape& lhs = ops[0];
  const Shape& rhs = ops[1];
  if (lhs.dtype != rhs.dtype) return Incompatible(Opcode::kDot, "dtype");
  if (d.lhs_batch.size() != d.rhs_batch.size() ||
      d.lhs_contracting.size() != d.rhs_contracting.size()) {
    return Incompatible(Opcode::kDot, "dimension list lengths differ");
  }
  std::vector<int64_t> lhs_used(d.lhs_batch);
  lhs_used.insert(lhs_used.end(), d.lhs_contracting.begin(),
                  d.lhs_contracting.end());
  std::vector<int64_t> rhs_used(d.rhs_batch);
  rhs_used.insert(rhs_used.end(), d.rhs_contracting.begin(),
                  d.rhs_contracting.end());
  if (!DistinctInRange(lhs_used, lhs.rank()) ||
      !DistinctInRange(rhs_used, rhs.rank())) {
    return Incompatible(Opcode::kDot, "invalid dimension numbers");
  }
  for (size_t i = 0; i < d.lhs_batch.size(); ++i) {
    if (lhs.dims[d.lhs_batch[i]] != rhs.dims[d.rhs_batch[i]]) {
      return Incompatible(Opcode::kDot, "batch sizes differ: ", lhs.ToString(),
                          " vs ", rhs.ToString());
    }
  }
  for (size_t i = 0; i < d.lhs_contracting.size(); ++i) {
    if (lhs.dims[d.lhs_contracting[i]] != rhs.dims[d.rhs_contracting[i]]) {
      return Incompatible(Opcode::kDot, "contracting sizes differ: ",
                          lhs.ToString(), " vs ", rhs.ToString());
    }
  }
  std::vector<int64_t> out;
  for (int64_t b : d.lhs_batch) out.push_back(lhs.dims[b]);
  for (int64_t i = 0; i < lhs.rank(); ++i) {
    if (std::find(lhs_used.begin(), lhs_used.end(), i) == lhs_used.end()) {
      out.push_back(lhs.dims[i]);
    }
  }
  for (int64_t i = 0; i < rhs.rank(); ++i) {
    if (std::find(rhs_used.begin(), rhs_used.end(), i) == rhs_used.end()) {
      out.push_back(rhs.dims[i]);
    }
  }
  return Shape(lhs.dtype, out);
}

absl::StatusOr<Shape> InferConv(absl::Span<const Shape> ops, const ConvDims& c,
                                absl::Span<const WindowDim> window) {
  const Opcode op = Opcode::kConvolution;
  const Shape& lhs = ops[0];
  const Shape& rhs = ops[1];
  const int64_t rank = lhs.rank();
  const size_t ns = c.lhs_spatial.size();
  if (lhs.dtype != rhs.dtype) return Incompatible(op, "dtype");
  if (rhs.rank() != rank || static_cast<int64_t>(ns) + 2 != rank ||
      c.rhs_spatial.size() != ns || c.out_spatial.size() != ns ||
      window.size() != ns) {
    return Incompatible(op, "rank / dim_labels / window mismatch");
  }
  std::vector<int64_t> lhs_dims = {c.lhs_batch, c.lhs_feature};
  lhs_dims.insert(lhs_dims.end(), c.lhs_spatial.begin(), c.lhs_spatial.end());
  std::vector<int64_t> rhs_dims = {c.rhs_input_feature, c.rhs_output_feature};
  rhs_dims.insert(rhs_dims.end(), c.rhs_spatial.begin(), c.rhs_spatial.end());
  std::vector<int64_t> out_dims = {c.out_batch, c.out_feature};
  out_dims.insert(out_dims.end(), c.out_spatial.begin(), c.out_spatial.end());
  if (!IsPermutation(lhs_dims, rank) || !IsPermutation(rhs_dims, rank) ||
      !IsPermutation(out_dims, rank)) {
    return Incompatible(op, "dim_labels are not permutations");
  }
  if (lhs.dims[c.lhs_feature] != rhs.dims[c.rhs_input_feature]) {
    return Incompatible(op, "input feature sizes differ");
  }
  std::vector<int64_t> out(rank);
  out[c.out_batch] = lhs.dims[c.lhs_batch];
  out[c.out_feature] = rhs.dims[c.rhs_output_feature];
  for (size_t i = 0; i < ns; ++i) {
    const WindowDim& w = window[i];
    if (w.size != rhs.dims[c.rhs_spatial[i]]) {
      return Incompatible(op, "window size ", w.size,
                          " differs from kernel size ",
                          rhs.dims[c.rhs_spatial[i]]);
    }
    if (w.stride < 1 || w.base_dilation < 1 || w.window_dilation < 1 ||
        w.padding_low < 0 || w.padding_high < 0 || w.size < 1) {
      return Incompatible(op, "invalid window configuration");
    }
    const int64_t n = WindowedOutputSize(lhs.dims[c.lhs_spatial[i]], w);
    if (n <= 0) return Incompatible(op, "non-positive output size");
    out[c.out_spatial[i]] = n;
  }
  return Shape(lhs.dtype, out);
}

}  // namespace

std::optional<int64_t> ExpectedArity(Opcode opcode,
                                     absl::Span<const Shape> operands) {
  switch (opcode) {
    case Opcode::kParameter:
    case Opcode::kConstant:
    case Opcode::kIota:
    case Opcode::kPartitionId:
      return 0;
    case Opcode::kSelect:
      return 3;
    case Opcode::kPad:
    case Opcode::kShift:
    case Opcode::kReduce:
    case Opcode::kDot:
    case Opcode::kConvolution:
      return 2;
    case Opcode::kConcatenate:
      return std::nullopt;
    case Opcode::kDynamicSlice:
      return operands.empty() ? 1 : 1 + operands[0].rank();
    case Opcode::kDynamicUpdateSlice:
      return operands.empty() ? 2 : 2 + operands[0].rank();
    default:
      if (IsElementwiseBinary(opcode)) return 2;
      return 1;
  }
}

absl::StatusOr<Shape> InferShape(Opcode opcode,
                                 absl::Span<const Shape> ops,
                                 const Attrs& attrs,
                                 const std::optional<Shape>& declared) {
  const std::optional<int64_t> arity = ExpectedArity(opcode, ops);
  if (arity.has_value() && *arity != static_cast<int64_t>(ops.size())) {
    return Incompatible(opcode, "expected ", *arity, " operands, got ",
                        ops.size());
  }
  for (const Shape& s : ops) {
    for (int64_t d : s.dims) {
      if (d < 0) return Incompatible(opcode, "negative dimension");
    }
  }
  auto need_declared = [&]() -> absl::Status {
    if (!declared.has_value()) {
      return Incompatible(opcode, "result shape must be declared");
    }
    for (int64_t d : declared->dims) {
      if (d < 0) return Incompatible(opcode, "negative dimension");
    }
    return absl::OkStatus();
  };

  switch (opcode) {
    case Opcode::kParameter: {
      if (auto s = need_declared(); !s.ok()) return s;
      return *declared;
    }
    case Opcode::kConstant:
      if (!attrs.literal.has_value()) {
        return Incompatible(opcode, "missing literal");
      }
      return attrs.literal->shape();
    case Opcode::kIota: {
      if (auto s = need_declared(); !s.ok()) return s;
      if (attrs.dimension < 0 || attrs.dimension >= declared->rank()) {
        return Incompatible(opcode, "iota dimension out of range");
      }
      return *declared;
    }
    case Opcode::kPartitionId:
      return Shape(DType::kS32, {});
    case Opcode::kNegate:
    case Opcode::kExp:
    case Opcode::kRelu:
      return ops[0];
    case Opcode::kConvert: {
      if (auto s = need_declared(); !s.ok()) return s;
      if (declared->dims != ops[0].dims) {
        return Incompatible(opcode, "dims differ");
      }
      return *declared;
    }
    case Opcode::kAdd:
    case Opcode::kMultiply:
    case Opcode::kMaximum:
    case Opcode::kSubtract:
    case Opcode::kDivide:
    case Opcode::kCompare:
      if (ops[0] != ops[1]) {
        return Incompatible(opcode, ops[0].ToString(), " vs ",
                            ops[1].ToString());
      }
      return opcode == Opcode::kCompare ? ops[0].WithDType(DType::kPred)
                                        : ops[0];
    case Opcode::kSelect:
      if (ops[0].dtype != DType::kPred || ops[0].dims != ops[1].dims ||
          ops[1] != ops[2]) {
        return Incompatible(opcode, ops[0].ToString(), ", ", ops[1].ToString(),
                            ", ", ops[2].ToString());
      }
      return ops[1];
    case Opcode::kBroadcast: {
      if (auto s = need_declared(); !s.ok()) return s;
      const auto& bd = attrs.dims;
      if (static_cast<int64_t>(bd.size()) != ops[0].rank() ||
          !DistinctInRange(bd, declared->rank()) ||
          declared->dtype != ops[0].dtype) {
        return Incompatible(opcode, "invalid broadcast dimensions");
      }
      for (size_t i = 0; i < bd.size(); ++i) {
        if (declared->dims[bd[i]] != ops[0].dims[i]) {
          return Incompatible(opcode, "operand dim ", i, " size mismatch");
        }
      }
      return *declared;
    }
    case Opcode::kReshape: {
      if (auto s = need_declared(); !s.ok()) return s;
      if (declared->num_elements() != ops[0].num_elements() ||
          declared->dtype != ops[0].dtype) {
        return Incompatible(opcode, ops[0].ToString(), " -> ",
                            declared->ToString());
      }
      return *declared;
    }
    case Opcode::kTranspose: {
      if (!IsPermutation(attrs.dims, ops[0].rank())) {
        return Incompatible(opcode, "invalid permutation");
      }
      std::vector<int64_t> out(ops[0].rank());
      for (int64_t i = 0; i < ops[0].rank(); ++i) {
        out[i] = ops[0].dims[attrs.dims[i]];
      }
      return Shape(ops[0].dtype, out);
    }
    case Opcode::kReverse:
      if (!DistinctInRange(attrs.dims, ops[0].rank())) {
        return Incompatible(opcode, "invalid dimensions");
      }
      return ops[0];
    case Opcode::kPad: {
      if (!IsScalar(ops[1]) || ops[1].dtype != ops[0].dtype ||
          static_cast<int64_t>(attrs.padding.size()) != ops[0].rank()) {
        return Incompatible(opcode, "invalid padding operands");
      }
      std::vector<int64_t> out(ops[0].rank());
      for (int64_t i = 0; i < ops[0].rank(); ++i) {
        const PaddingDim& p = attrs.padding[i];
        if (p.low < 0 || p.high < 0 || p.interior < 0) {
          return Incompatible(opcode, "negative padding");
        }
        const int64_t n = ops[0].dims[i];
        out[i] = p.low + p.high + n + std::max<int64_t>(n - 1, 0) * p.interior;
      }
      return Shape(ops[0].dtype, out);
    }
    case Opcode::kSlice: {
      if (static_cast<int64_t>(attrs.slice.size()) != ops[0].rank()) {
        return Incompatible(opcode, "slice rank mismatch");
      }
      std::vector<int64_t> out(ops[0].rank());
      for (int64_t i = 0; i < ops[0].rank(); ++i) {
        const SliceDim& s = attrs.slice[i];
        if (s.start < 0 || s.limit < s.start || s.limit > ops[0].dims[i] ||
            s.stride < 1) {
          return Incompatible(opcode, "invalid slice bounds on dim ", i);
        }
        out[i] = CeilOfRatio(s.limit - s.start, s.stride);
      }
      return Shape(ops[0].dtype, out);
    }
    case Opcode::kDynamicSlice: {
      if (static_cast<int64_t>(attrs.dims.size()) != ops[0].rank()) {
        return Incompatible(opcode, "sizes rank mismatch");
      }
      for (size_t i = 1; i < ops.size(); ++i) {
        if (!IsScalar(ops[i]) || !IsIntegral(ops[i].dtype)) {
          return Incompatible(opcode, "start indices must be integer scalars");
        }
      }
      for (int64_t i = 0; i < ops[0].rank(); ++i) {
        if (attrs.dims[i] < 0 || attrs.dims[i] > ops[0].dims[i]) {
          return Incompatible(opcode, "slice size exceeds operand on dim ", i);
        }
      }
      return Shape(ops[0].dtype, attrs.dims);
    }
    case Opcode::kDynamicUpdateSlice: {
      if (ops[1].rank() != ops[0].rank() || ops[1].dtype != ops[0].dtype) {
        return Incompatible(opcode, "update rank or dtype mismatch");
      }
      for (int64_t i = 0; i < ops[0].rank(); ++i) {
        if (ops[1].dims[i] > ops[0].dims[i]) {
          return Incompatible(opcode, "update larger than operand");
        }
      }
      for (size_t i = 2; i < ops.size(); ++i) {
        if (!IsScalar(ops[i]) || !IsIntegral(ops[i].dtype)) {
          return Incompatible(opcode, "start indices must be integer scalars");
        }
      }
      return ops[0];
    }
    case Opcode::kConcatenate: {
      if (ops.empty()) return Incompatible(opcode, "no operands");
      const int64_t d = attrs.dimension;
      if (d < 0 || d >= ops[0].rank()) {
        return Incompatible(opcode, "dimension out of range");
      }
      Shape out = ops[0];
      for (size_t i = 1; i < ops.size(); ++i) {
        if (ops[i].rank() != out.rank() || ops[i].dtype != out.dtype) {
          return Incompatible(opcode, "operand ", i, " rank or dtype");
        }
        for (int64_t j = 0; j < out.rank(); ++j) {
          if (j != d && ops[i].dims[j] != out.dims[j]) {
            return Incompatible(opcode, "operand ", i, " size on dim ", j);
          }
        }
        out.dims[d] += ops[i].dims[d];
      }
      return out;
    }
    case Opcode::kRotate:
      if (attrs.dimension < 0 || attrs.dimension >= ops[0].rank()) {
        return Incompatible(opcode, "dimension out of range");
      }
      return ops[0];
    case Opcode::kShift:
      if (attrs.dimension < 0 || attrs.dimension >= ops[0].rank() ||
          !IsScalar(ops[1]) || ops[1].dtype != ops[0].dtype) {
        return Incompatible(opcode, "invalid dimension or fill operand");
      }
      return ops[0];
    case Opcode::kReduce: {
      if (!IsScalar(ops[1]) || ops[1].dtype != ops[0].dtype ||
          !DistinctInRange(attrs.dims, ops[0].rank())) {
        return Incompatible(opcode, "invalid init or dimensions");
      }
      std::vector<int64_t> out;
      for (int64_t i = 0; i < ops[0].rank(); ++i) {
        if (std::find(attrs.dims.begin(), attrs.dims.end(), i) ==
            attrs.dims.end()) {
          out.push_back(ops[0].dims[i]);
        }
      }
      return Shape(ops[0].dtype, out);
    }
    case Opcode::kDot:
      return InferDot(ops, attrs.dot);
    case Opcode::kConvolution:
      return InferConv(ops, attrs.conv, attrs.window);
    case Opcode::kAllReduce: {
      int64_t g = 0;
      if (auto s = CheckGroups(opcode, attrs.replica_groups, &g); !s.ok()) {
        return s;
      }
      return ops[0];
    }
    case Opcode::kAllGather:
    case Opcode::kReduceScatter: {
      int64_t g = 0;
      if (auto s = CheckGroups(opcode, attrs.replica_groups, &g); !s.ok()) {
        return s;
      }
      const int64_t d = attrs.dimension;
      if (d < 0 || d >= ops[0].rank()) {
        return Incompatible(opcode, "dimension out of range");
      }
      Shape out = ops[0];
      if (opcode == Opcode::kAllGather) {
        out.dims[d] *= g;
      } else {
        if (out.dims[d] % g != 0) {
          return Incompatible(opcode, "dimension not divisible by group size");
        }
        out.dims[d] /= g;
      }
      return out;
    }
    case Opcode::kAllToAll: {
      int64_t g = 0;
      if (auto s = CheckGroups(opcode, attrs.replica_groups, &g); !s.ok()) {
        return s;
      }
      const int64_t sd = attrs.split_dimension;
      const int64_t cd = attrs.concat_dimension;
      if (sd < 0 || sd >= ops[0].rank() || cd < 0 || cd >= ops[0].rank()) {
        return Incompatible(opcode, "dimension out of range");
      }
      if (ops[0].dims[sd] % g != 0) {
        return Incompatible(opcode, "split dimension not divisible");
      }
      Shape out = ops[0];
      out.dims[sd] /= g;
      out.dims[cd] *= g;
      return out;
    }
    case Opcode::kCollectivePermute:
      return ops[0];
  }
  return Incompatible(opcode, "unknown opcode");
}

}  // namespace shardlab
