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

#include "shardlab/simulator/evaluator.h"

#include <algorithm>
#include <cmath>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "shardlab/util/status_macros.h"

namespace shardlab {

namespace {

int64_t ToS32(int64_t v) {
  return static_cast<int32_t>(static_cast<uint32_t>(static_cast<uint64_t>(v)));
}

absl::Status Unsupported(const Instruction& instr) {
  return absl::InvalidArgumentError(
      absl::StrCat("cannot evaluate ", OpcodeName(instr.opcode), " %",
                   instr.name, " on a single device"));
}

// Walks every index of `dims`; `fn` receives the index and its row-major
// linear position.
template <typename Fn>
void ForEachLinear(absl::Span<const int64_t> dims, Fn&& fn) {
  const int64_t n = Product(dims);
  if (n == 0) return;
  std::vector<int64_t> index(dims.size(), 0);
  for (int64_t linear = 0; linear < n; ++linear) {
    fn(absl::Span<const int64_t>(index), linear);
    for (int64_t d = static_cast<int64_t>(dims.size()) - 1; d >= 0; --d) {
      if (++index[d] < dims[d]) break;
      index[d] = 0;
    }
  }
}

absl::StatusOr<Tensor> Elementwise(const Instruction& instr,
                                   absl::Span<const Tensor* const> ops) {
  const Shape& shape = instr.shape;
  Tensor out(shape);
  const DType in_dtype = ops[0]->dtype();
  for (int64_t i = 0; i < out.size(); ++i) {
    const double a = ops[0]->flat(i);
    double v = 0;
    switch (instr.opcode) {
      case Opcode::kNegate:
        v = -a;
        break;
      case Opcode::kExp:
        v = std::exp(a);
        break;
      case Opcode::kRelu:
        v = std::max(a, 0.0);
        break;
      case Opcode::kConvert:
        v = a;
        break;
      case Opcode::kAdd: {
        ASSIGN_OR_RETURN(v, Arith(ArithOp::kAdd, in_dtype, a, ops[1]->flat(i)));
        break;
      }
      case Opcode::kSubtract: {
        ASSIGN_OR_RETURN(v, Arith(ArithOp::kSub, in_dtype, a, ops[1]->flat(i)));
        break;
      }
      case Opcode::kMultiply: {
        ASSIGN_OR_RETURN(v, Arith(ArithOp::kMul, in_dtype, a, ops[1]->flat(i)));
        break;
      }
      case Opcode::kDivide: {
        absl::StatusOr<double> r =
            Arith(ArithOp::kDiv, in_dtype, a, ops[1]->flat(i));
        if (!r.ok()) {
          return absl::InvalidArgumentError(
              absl::StrCat(r.status().message(), " in %", instr.name));
        }
        v = *r;
        break;
      }
      case Opcode::kMaximum:
        v = std::max(a, ops[1]->flat(i));
        if (std::isnan(a) || std::isnan(ops[1]->flat(i))) v = NAN;
        break;
      case Opcode::kCompare: {
        const double b = ops[1]->flat(i);
        switch (instr.attrs.direction) {
          case ComparisonDirection::kEq: v = a == b; break;
          case ComparisonDirection::kNe: v = a != b; break;
          case ComparisonDirection::kLt: v = a < b; break;
          case ComparisonDirection::kLe: v = a <= b; break;
          case ComparisonDirection::kGt: v = a > b; break;
          case ComparisonDirection::kGe: v = a >= b; break;
        }
        break;
      }
      case Opcode::kSelect:
        v = a != 0 ? ops[1]->flat(i) : ops[2]->flat(i);
        break;
      default:
        return Unsupported(instr);
    }
    out.set_flat(i, v);
  }
  return out;
}

Tensor EvalBroadcast(const Instruction& instr, const Tensor& x) {
  Tensor out(instr.shape);
  const auto& bd = instr.attrs.dims;
  std::vector<int64_t> src(bd.size());
  ForEachLinear(instr.shape.dims, [&](absl::Span<const int64_t> idx, int64_t l) {
    for (size_t i = 0; i < bd.size(); ++i) src[i] = idx[bd[i]];
    out.set_flat(l, x.at(src));
  });
  return out;
}

Tensor EvalTranspose(const Instruction& instr, const Tensor& x) {
  Tensor out(instr.shape);
  const auto& perm = instr.attrs.dims;
  std::vector<int64_t> src(perm.size());
  ForEachLinear(instr.shape.dims, [&](absl::Span<const int64_t> idx, int64_t l) {
    for (size_t i = 0; i < perm.size(); ++i) src[perm[i]] = idx[i];
    out.set_flat(l, x.at(src));
  });
  return out;
}

Tensor EvalReverse(const Instruction& instr, const Tensor& x) {
  Tensor out(instr.shape);
  std::vector<int64_t> src;
  ForEachLinear(instr.shape.dims, [&](absl::Span<const int64_t> idx, int64_t l) {
    src.assign(idx.begin(), idx.end());
    for (int64_t d : instr.attrs.dims) src[d] = instr.shape.dims[d] - 1 - idx[d];
    out.set_flat(l, x.at(src));
  });
  return out;
}

Tensor EvalPad(const Instruction& instr, const Tensor& x, double pad_value) {
  Tensor out = Tensor::Filled(instr.shape, pad_value);
  std::vector<int64_t> dst(x.shape().rank());
  ForEachLinear(x.shape().dims, [&](absl::Span<const int64_t> idx, int64_t l) {
    for (size_t i = 0; i < idx.size(); ++i) {
      const PaddingDim& p = instr.attrs.padding[i];
      dst[i] = p.low + idx[i] * (p.interior + 1);
    }
    out.set(dst, x.flat(l));
  });
  return out;
}

Tensor EvalSlice(const Instruction& instr, const Tensor& x) {
  Tensor out(instr.shape);
  std::vector<int64_t> src(x.shape().rank());
  ForEachLinear(instr.shape.dims, [&](absl::Span<const int64_t> idx, int64_t l) {
    for (size_t i = 0; i < idx.size(); ++i) {
      const SliceDim& s = instr.attrs.slice[i];
      src[i] = s.start + idx[i] * s.stride;
    }
    out.set_flat(l, x.at(src));
  });
  return out;
}

std::vector<int64_t> ClampedStarts(absl::Span<const Tensor* const> index_ops,
                                   const Shape& operand,
                                   absl::Span<const int64_t> sizes) {
  std::vector<int64_t> starts(operand.rank());
  for (int64_t i = 0; i < operand.rank(); ++i) {
    const int64_t s = static_cast<int64_t>(index_ops[i]->flat(0));
    starts[i] = std::clamp<int64_t>(s, 0, operand.dims[i] - sizes[i]);
  }
  return starts;
}

Tensor EvalDynamicSlice(const Instruction& instr,
                        absl::Span<const Tensor* const> ops) {
  const Tensor& x = *ops[0];
  std::vector<int64_t> starts =
      ClampedStarts(ops.subspan(1), x.shape(), instr.attrs.dims);
  Tensor out(instr.shape);
  std::vector<int64_t> src(x.shape().rank());
  ForEachLinear(instr.shape.dims, [&](absl::Span<const int64_t> idx, int64_t l) {
    for (size_t i = 0; i < idx.size(); ++i) src[i] = starts[i] + idx[i];
    out.set_flat(l, x.at(src));
  });
  return out;
}

Tensor EvalDynamicUpdateSlice(absl::Span<const Tensor* const> ops) {
  Tensor out = *ops[0];
  const Tensor& update = *ops[1];
  std::vector<int64_t> starts =
      ClampedStarts(ops.subspan(2), out.shape(), update.shape().dims);
  std::vector<int64_t> dst(out.shape().rank());
  ForEachLinear(update.shape().dims,
                [&](absl::Span<const int64_t> idx, int64_t l) {
                  for (size_t i = 0; i < idx.size(); ++i) {
                    dst[i] = starts[i] + idx[i];
                  }
                  out.set(dst, update.flat(l));
                });
  return out;
}

Tensor EvalConcat(const Instruction& instr,
                  absl::Span<const Tensor* const> ops) {
  Tensor out(instr.shape);
  const int64_t dim = instr.attrs.dimension;
  int64_t offset = 0;
  std::vector<int64_t> dst(instr.shape.rank());
  for (const Tensor* op : ops) {
    ForEachLinear(op->shape().dims, [&](absl::Span<const int64_t> idx, int64_t l) {
      dst.assign(idx.begin(), idx.end());
      dst[dim] += offset;
      out.set(dst, op->flat(l));
    });
    offset += op->shape().dims[dim];
  }
  return out;
}

// out[i] = x[(i + amount) mod n] along the dimension.
Tensor EvalRotate(const Instruction& instr, const Tensor& x) {
  Tensor out(instr.shape);
  const int64_t dim = instr.attrs.dimension;
  const int64_t n = instr.shape.dims[dim];
  std::vector<int64_t> src;
  ForEachLinear(instr.shape.dims, [&](absl::Span<const int64_t> idx, int64_t l) {
    src.assign(idx.begin(), idx.end());
    src[dim] = ((idx[dim] + instr.attrs.amount) % n + n) % n;
    out.set_flat(l, x.at(src));
  });
  return out;
}

// out[i] = x[i - amount] when in range, else the fill value.
Tensor EvalShift(const Instruction& instr, const Tensor& x, double fill) {
  Tensor out(instr.shape);
  const int64_t dim = instr.attrs.dimension;
  const int64_t n = instr.shape.dims[dim];
  std::vector<int64_t> src;
  ForEachLinear(instr.shape.dims, [&](absl::Span<const int64_t> idx, int64_t l) {
    src.assign(idx.begin(), idx.end());
    src[dim] = idx[dim] - instr.attrs.amount;
    out.set_flat(l, src[dim] >= 0 && src[dim] < n ? x.at(src) : fill);
  });
  return out;
}

absl::StatusOr<Tensor> EvalReduce(const Instruction& instr, const Tensor& x,
                                  double init) {
  const DType dtype = x.dtype();
  const ArithOp op = ReduceArithOp(instr.attrs.reduce_kind);
  std::vector<bool> reduced(x.shape().rank(), false);
  for (int64_t d : instr.attrs.dims) reduced[d] = true;
  std::vector<double> acc(instr.shape.num_elements(), init);
  std::vector<int64_t> out_strides = RowMajorStrides(instr.shape.dims);
  absl::Status status;
  ForEachLinear(x.shape().dims, [&](absl::Span<const int64_t> idx, int64_t l) {
    if (!status.ok()) return;
    int64_t o = 0;
    int64_t k = 0;
    for (size_t i = 0; i < idx.size(); ++i) {
      if (!reduced[i]) o += idx[i] * out_strides[k++];
    }
    absl::StatusOr<double> r = Arith(op, dtype, acc[o], x.flat(l));
    if (!r.ok()) {
      status = r.status();
      return;
    }
    // F32 accumulates in double; integers wrap at every step.
    acc[o] = dtype == DType::kF32 ? (op == ArithOp::kAdd   ? acc[o] + x.flat(l)
                                     : op == ArithOp::kMul ? acc[o] * x.flat(l)
                                                           : *r)
                                  : *r;
  });
  if (!status.ok()) return status;
  return Tensor(instr.shape, std::move(acc));
}

absl::StatusOr<Tensor> EvalDot(const Instruction& instr, const Tensor& lhs,
                               const Tensor& rhs) {
  const DotDims& d = instr.attrs.dot;
  const DType dtype = lhs.dtype();
  const int64_t nb = d.lhs_batch.size();
  std::vector<int64_t> lhs_free, rhs_free;
  auto is_in = [](const std::vector<int64_t>& v, int64_t x) {
    return std::find(v.begin(), v.end(), x) != v.end();
  };
  for (int64_t i = 0; i < lhs.shape().rank(); ++i) {
    if (!is_in(d.lhs_batch, i) && !is_in(d.lhs_contracting, i)) lhs_free.push_back(i);
  }
  for (int64_t i = 0; i < rhs.shape().rank(); ++i) {
    if (!is_in(d.rhs_batch, i) && !is_in(d.rhs_contracting, i)) rhs_free.push_back(i);
  }
  std::vector<int64_t> contract_dims;
  for (int64_t c : d.lhs_contracting) contract_dims.push_back(lhs.shape().dims[c]);
  Tensor out(instr.shape);
  std::vector<int64_t> li(lhs.shape().rank()), ri(rhs.shape().rank());
  absl::Status status;
  ForEachLinear(instr.shape.dims, [&](absl::Span<const int64_t> idx, int64_t l) {
    if (!status.ok()) return;
    for (int64_t b = 0; b < nb; ++b) {
      li[d.lhs_batch[b]] = idx[b];
      ri[d.rhs_batch[b]] = idx[b];
    }
    for (size_t i = 0; i < lhs_free.size(); ++i) li[lhs_free[i]] = idx[nb + i];
    for (size_t i = 0; i < rhs_free.size(); ++i) {
      ri[rhs_free[i]] = idx[nb + lhs_free.size() + i];
    }
    double acc = 0;
    ForEachLinear(contract_dims, [&](absl::Span<const int64_t> c, int64_t) {
      for (size_t k = 0; k < c.size(); ++k) {
        li[d.lhs_contracting[k]] = c[k];
        ri[d.rhs_contracting[k]] = c[k];
      }
      if (dtype == DType::kF32) {
        acc += lhs.at(li) * rhs.at(ri);
        return;
      }
      absl::StatusOr<double> p = Arith(ArithOp::kMul, dtype, lhs.at(li), rhs.at(ri));
      absl::StatusOr<double> s = Arith(ArithOp::kAdd, dtype, acc, *p);
      acc = *s;
    });
    out.set_flat(l, acc);
  });
  if (!status.ok()) return status;
  return out;
}

absl::StatusOr<Tensor> EvalConv(const Instruction& instr, const Tensor& lhs,
                                const Tensor& rhs) {
  const ConvDims& c = instr.attrs.conv;
  const auto& window = instr.attrs.window;
  const DType dtype = lhs.dtype();
  const size_t ns = c.lhs_spatial.size();
  const int64_t in_features = lhs.shape().dims[c.lhs_feature];
  std::vector<int64_t> kernel_dims(ns);
  for (size_t s = 0; s < ns; ++s) kernel_dims[s] = window[s].size;
  Tensor out(instr.shape);
  std::vector<int64_t> li(lhs.shape().rank()), ri(rhs.shape().rank());
  ForEachLinear(instr.shape.dims, [&](absl::Span<const int64_t> idx, int64_t l) {
    li[c.lhs_batch] = idx[c.out_batch];
    ri[c.rhs_output_feature] = idx[c.out_feature];
    double acc = 0;
    ForEachLinear(kernel_dims, [&](absl::Span<const int64_t> k, int64_t) {
      for (size_t s = 0; s < ns; ++s) {
        const WindowDim& w = window[s];
        const int64_t pos = idx[c.out_spatial[s]] * w.stride +
                            k[s] * w.window_dilation - w.padding_low;
        if (pos < 0 || pos % w.base_dilation != 0) return;
        const int64_t src = pos / w.base_dilation;
        if (src >= lhs.shape().dims[c.lhs_spatial[s]]) return;
        li[c.lhs_spatial[s]] = src;
        ri[c.rhs_spatial[s]] = k[s];
      }
      for (int64_t f = 0; f < in_features; ++f) {
        li[c.lhs_feature] = f;
        ri[c.rhs_input_feature] = f;
        if (dtype == DType::kF32) {
          acc += lhs.at(li) * rhs.at(ri);
        } else {
          acc = *Arith(ArithOp::kAdd, dtype, acc,
                       *Arith(ArithOp::kMul, dtype, lhs.at(li), rhs.at(ri)));
        }
      }
    });
    out.set_flat(l, acc);
  });
  return out;
}

}  // namespace

ArithOp ReduceArithOp(ReduceKind kind) {
  switch (kind) {
    case ReduceKind::kSum: return ArithOp::kAdd;
    case ReduceKind::kProd: return ArithOp::kMul;
    case ReduceKind::kMax: return ArithOp::kMax;
    case ReduceKind::kMin: return ArithOp::kMin;
  }
  return ArithOp::kAdd;
}

absl::StatusOr<double> Arith(ArithOp op, DType dtype, double a, double b) {
  if (dtype == DType::kF32) {
    switch (op) {
      case ArithOp::kAdd: return Tensor::Canonicalize(dtype, a + b);
      case ArithOp::kSub: return Tensor::Canonicalize(dtype, a - b);
      case ArithOp::kMul: return Tensor::Canonicalize(dtype, a * b);
      case ArithOp::kDiv: return Tensor::Canonicalize(dtype, a / b);
      case ArithOp::kMax:
        return std::isnan(a) || std::isnan(b) ? NAN : std::max(a, b);
      case ArithOp::kMin:
        return std::isnan(a) || std::isnan(b) ? NAN : std::min(a, b);
    }
  }
  const int64_t x = static_cast<int64_t>(a);
  const int64_t y = static_cast<int64_t>(b);
  int64_t r = 0;
  switch (op) {
    case ArithOp::kAdd: r = x + y; break;
    case ArithOp::kSub: r = x - y; break;
    case ArithOp::kMul:
      r = static_cast<int64_t>(static_cast<uint64_t>(x) * static_cast<uint64_t>(y));
      break;
    case ArithOp::kDiv:
      if (y == 0) return absl::InvalidArgumentError("DivideByZero: integer division by zero");
      r = x / y;
      break;
    case ArithOp::kMax: r = std::max(x, y); break;
    case ArithOp::kMin: r = std::min(x, y); break;
  }
  switch (dtype) {
    case DType::kS32:
      return static_cast<double>(ToS32(r));
    case DType::kU32:
      return static_cast<double>(static_cast<uint32_t>(static_cast<uint64_t>(r)));
    default:
      return r != 0 ? 1.0 : 0.0;
  }
}

absl::StatusOr<Tensor> EvaluateInstruction(
    const Instruction& instr, absl::Span<const Tensor* const> ops,
    std::optional<int64_t> partition_id) {
  switch (instr.opcode) {
    case Opcode::kParameter:
      return absl::InvalidArgumentError("parameters are bound by the caller");
    case Opcode::kConstant:
      return *instr.attrs.literal;
    case Opcode::kIota: {
      Tensor out(instr.shape);
      const int64_t dim = instr.attrs.dimension;
      ForEachLinear(instr.shape.dims,
                    [&](absl::Span<const int64_t> idx, int64_t l) {
                      out.set_flat(l, static_cast<double>(idx[dim]));
                    });
      return out;
    }
    case Opcode::kPartitionId:
      if (!partition_id.has_value()) return Unsupported(instr);
      return Tensor::Scalar(DType::kS32, static_cast<double>(*partition_id));
    case Opcode::kBroadcast:
      return EvalBroadcast(instr, *ops[0]);
    case Opcode::kReshape:
      return ops[0]->Reshaped(instr.shape.dims);
    case Opcode::kTranspose:
      return EvalTranspose(instr, *ops[0]);
    case Opcode::kReverse:
      return EvalReverse(instr, *ops[0]);
    case Opcode::kPad:
      return EvalPad(instr, *ops[0], ops[1]->flat(0));
    case Opcode::kSlice:
      return EvalSlice(instr, *ops[0]);
    case Opcode::kDynamicSlice:
      return EvalDynamicSlice(instr, ops);
    case Opcode::kDynamicUpdateSlice:
      return EvalDynamicUpdateSlice(ops);
    case Opcode::kConcatenate:
      return EvalConcat(instr, ops);
    case Opcode::kRotate:
      return EvalRotate(instr, *ops[0]);
    case Opcode::kShift:
      return EvalShift(instr, *ops[0], ops[1]->flat(0));
    case Opcode::kReduce:
      return EvalReduce(instr, *ops[0], ops[1]->flat(0));
    case Opcode::kDot:
      return EvalDot(instr, *ops[0], *ops[1]);
    case Opcode::kConvolution:
      return EvalConv(instr, *ops[0], *ops[1]);
    default:
      if (IsElementwise(instr.opcode)) return Elementwise(instr, ops);
      return Unsupported(instr);
  }
}

absl::StatusOr<std::vector<Tensor>> EvaluateSingle(
    const Graph& graph, absl::Span<const Tensor> inputs) {
  std::vector<Tensor> values(graph.size());
  for (int64_t i = 0; i < graph.size(); ++i) {
    const Instruction& instr = graph.instr(i);
    if (instr.opcode == Opcode::kParameter) {
      const int64_t p = instr.attrs.parameter_index;
      if (p < 0 || p >= static_cast<int64_t>(inputs.size())) {
        return absl::InvalidArgumentError(
            absl::StrCat("missing input for parameter ", p));
      }
      if (inputs[p].shape() != instr.shape) {
        return absl::InvalidArgumentError(absl::StrCat(
            "input ", p, " has shape ", inputs[p].shape().ToString(),
            ", expected ", instr.shape.ToString()));
      }
      values[i] = inputs[p];
      continue;
    }
    if (IsCollective(instr.opcode) || instr.opcode == Opcode::kPartitionId) {
      return Unsupported(instr);
    }
    std::vector<const Tensor*> ops;
    for (int64_t op : instr.operands) ops.push_back(&values[op]);
    ASSIGN_OR_RETURN(values[i], EvaluateInstruction(instr, ops, std::nullopt));
  }
  std::vector<Tensor> outputs;
  for (int64_t o : graph.outputs) outputs.push_back(values[o]);
  return outputs;
}

}  // namespace shardlab
