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

#include "shardlab/simulator/spmd_executor.h"

#include <algorithm>
#include <set>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "shardlab/simulator/evaluator.h"
#include "shardlab/util/status_macros.h"

namespace shardlab {

namespace {

absl::Status Mismatch(const Instruction& instr, absl::string_view what) {
  return absl::InvalidArgumentError(absl::StrCat(
      "SubgroupMismatch: ", OpcodeName(instr.opcode), " %", instr.name, ": ",
      what));
}

absl::Status CheckGroups(const Instruction& instr,
                         absl::Span<const int64_t> devices) {
  std::set<int64_t> all(devices.begin(), devices.end());
  std::set<int64_t> seen;
  for (const auto& group : instr.attrs.replica_groups) {
    for (int64_t d : group) {
      if (!all.count(d)) {
        return Mismatch(instr, absl::StrCat("unknown device ", d));
      }
      if (!seen.insert(d).second) {
        return Mismatch(instr, absl::StrCat("device ", d, " appears twice"));
      }
    }
  }
  if (seen.size() != all.size()) {
    return Mismatch(instr, "groups do not cover every device");
  }
  return absl::OkStatus();
}

absl::Status CheckPairs(const Instruction& instr,
                        absl::Span<const int64_t> devices) {
  std::set<int64_t> all(devices.begin(), devices.end());
  std::set<int64_t> sources, targets;
  for (const auto& [s, t] : instr.attrs.source_target_pairs) {
    if (!all.count(s) || !all.count(t)) {
      return Mismatch(instr, absl::StrCat("pair (", s, ",", t,
                                          ") names an unknown device"));
    }
    if (!sources.insert(s).second || !targets.insert(t).second) {
      return Mismatch(instr, "sources and targets must be distinct");
    }
  }
  return absl::OkStatus();
}

// Piece `k` of `x` when split into `n` equal parts along `dim`.
Tensor Piece(const Tensor& x, int64_t dim, int64_t n, int64_t k) {
  Shape shape = x.shape();
  const int64_t size = shape.dims[dim] / n;
  shape.dims[dim] = size;
  Tensor out(shape);
  std::vector<int64_t> src;
  ForEachIndex(shape.dims, [&](absl::Span<const int64_t> idx) {
    src.assign(idx.begin(), idx.end());
    src[dim] += k * size;
    out.set(idx, x.at(src));
  });
  return out;
}

Tensor Concat(const std::vector<const Tensor*>& parts, int64_t dim) {
  Shape shape = parts[0]->shape();
  shape.dims[dim] = 0;
  for (const Tensor* p : parts) shape.dims[dim] += p->shape().dims[dim];
  Tensor out(shape);
  int64_t offset = 0;
  std::vector<int64_t> dst;
  for (const Tensor* p : parts) {
    ForEachIndex(p->shape().dims, [&](absl::Span<const int64_t> idx) {
      dst.assign(idx.begin(), idx.end());
      dst[dim] += offset;
      out.set(dst, p->at(idx));
    });
    offset += p->shape().dims[dim];
  }
  return out;
}

absl::StatusOr<Tensor> Reduce(const std::vector<const Tensor*>& parts,
                              ReduceKind kind) {
  const DType dtype = parts[0]->dtype();
  const ArithOp op = ReduceArithOp(kind);
  std::vector<double> acc(parts[0]->data().begin(), parts[0]->data().end());
  for (size_t p = 1; p < parts.size(); ++p) {
    for (size_t i = 0; i < acc.size(); ++i) {
      const double v = parts[p]->flat(i);
      if (dtype == DType::kF32 && op == ArithOp::kAdd) {
        acc[i] += v;
      } else if (dtype == DType::kF32 && op == ArithOp::kMul) {
        acc[i] *= v;
      } else {
        ASSIGN_OR_RETURN(acc[i], Arith(op, dtype, acc[i], v));
      }
    }
  }
  return Tensor(parts[0]->shape(), std::move(acc));
}

using Env = std::map<int64_t, std::vector<Tensor>>;

absl::Status RunCollective(const Instruction& instr, int64_t id,
                           absl::Span<const int64_t> devices, Env& env) {
  const int64_t operand = instr.operands[0];
  auto value = [&](int64_t device) -> const Tensor& {
    return env.at(device)[operand];
  };
  if (instr.opcode == Opcode::kCollectivePermute) {
    RETURN_IF_ERROR(CheckPairs(instr, devices));
    std::map<int64_t, Tensor> received;
    for (const auto& [s, t] : instr.attrs.source_target_pairs) {
      received.emplace(t, value(s));
    }
    for (int64_t d : devices) {
      auto it = received.find(d);
      env.at(d)[id] = it != received.end() ? it->second : Tensor(instr.shape);
    }
    return absl::OkStatus();
  }
  RETURN_IF_ERROR(CheckGroups(instr, devices));
  for (const auto& group : instr.attrs.replica_groups) {
    std::vector<const Tensor*> parts;
    for (int64_t d : group) parts.push_back(&value(d));
    const int64_t n = group.size();
    switch (instr.opcode) {
      case Opcode::kAllReduce: {
        ASSIGN_OR_RETURN(Tensor sum, Reduce(parts, instr.attrs.reduce_kind));
        for (int64_t d : group) env.at(d)[id] = sum;
        break;
      }
      case Opcode::kAllGather: {
        Tensor all = Concat(parts, instr.attrs.dimension);
        for (int64_t d : group) env.at(d)[id] = all;
        break;
      }
      case Opcode::kReduceScatter: {
        ASSIGN_OR_RETURN(Tensor sum, Reduce(parts, instr.attrs.reduce_kind));
        for (int64_t k = 0; k < n; ++k) {
          env.at(group[k])[id] = Piece(sum, instr.attrs.dimension, n, k);
        }
        break;
      }
      case Opcode::kAllToAll: {
        const int64_t sd = instr.attrs.split_dimension;
        std::vector<std::vector<Tensor>> pieces(n);
        for (int64_t j = 0; j < n; ++j) {
          for (int64_t k = 0; k < n; ++k) {
            pieces[k].push_back(Piece(*parts[j], sd, n, k));
          }
        }
        for (int64_t k = 0; k < n; ++k) {
          std::vector<const Tensor*> recv;
          for (const Tensor& t : pieces[k]) recv.push_back(&t);
          env.at(group[k])[id] = Concat(recv, instr.attrs.concat_dimension);
        }
        break;
      }
      default:
        return absl::InternalError("not a collective");
    }
  }
  return absl::OkStatus();
}

}  // namespace

absl::StatusOr<std::vector<DeviceTensors>> EvaluateSpmd(
    const Graph& program, absl::Span<const int64_t> devices,
    absl::Span<const DeviceTensors> inputs) {
  if (devices.empty()) return absl::InvalidArgumentError("no devices");
  Env env;
  for (int64_t d : devices) env[d].resize(program.size());
  for (int64_t i = 0; i < program.size(); ++i) {
    const Instruction& instr = program.instr(i);
    if (IsCollective(instr.opcode)) {
      absl::Status s = RunCollective(instr, i, devices, env);
      if (!s.ok()) return s;
      continue;
    }
    for (int64_t d : devices) {
      std::vector<Tensor>& values = env.at(d);
      if (instr.opcode == Opcode::kParameter) {
        const int64_t p = instr.attrs.parameter_index;
        if (p < 0 || p >= static_cast<int64_t>(inputs.size()) ||
            !inputs[p].count(d)) {
          return absl::InvalidArgumentError(absl::StrCat(
              "missing input for parameter ", p, " on device ", d));
        }
        const Tensor& in = inputs[p].at(d);
        if (in.shape() != instr.shape) {
          return absl::InvalidArgumentError(absl::StrCat(
              "parameter ", p, " on device ", d, " has shape ",
              in.shape().ToString(), ", expected ", instr.shape.ToString()));
        }
        values[i] = in;
        continue;
      }
      std::vector<const Tensor*> ops;
      for (int64_t op : instr.operands) ops.push_back(&values[op]);
      absl::StatusOr<Tensor> r = EvaluateInstruction(instr, ops, d);
      if (!r.ok()) {
        return absl::Status(r.status().code(),
                            absl::StrCat(r.status().message(), " (device ", d,
                                         ")"));
      }
      values[i] = *std::move(r);
    }
  }
  std::vector<DeviceTensors> outputs(program.outputs.size());
  for (size_t o = 0; o < program.outputs.size(); ++o) {
    for (int64_t d : devices) outputs[o][d] = env.at(d)[program.outputs[o]];
  }
  return outputs;
}

absl::StatusOr<std::vector<DeviceTensors>> EvaluateSpmd(
    const SpmdProgram& program, absl::Span<const DeviceTensors> inputs) {
  return EvaluateSpmd(program.graph, program.devices, inputs);
}

}  // namespace shardlab
