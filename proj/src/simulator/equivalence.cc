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

#include "shardlab/simulator/equivalence.h"

#include <cmath>
#include <random>

#include "absl/strings/str_cat.h"
#include "json.hpp"
#include "shardlab/simulator/evaluator.h"
#include "shardlab/simulator/spmd_executor.h"
#include "shardlab/util/status_macros.h"

namespace shardlab {

std::string EquivalenceReport::ToJson() const {
  nlohmann::json j;
  j["pass"] = pass;
  j["max_abs_error"] = max_abs_error;
  j["max_rel_error"] = max_rel_error;
  j["mismatches"] = mismatches;
  j["collectives"] = nlohmann::json::parse(CollectiveStatsJson(stats));
  return j.dump(2);
}

absl::StatusOr<EquivalenceReport> VerifyEquivalence(
    const Graph& graph, const SpmdProgram& program,
    absl::Span<const Tensor> inputs, const EquivalenceOptions& options) {
  ASSIGN_OR_RETURN(std::vector<Tensor> expected, EvaluateSingle(graph, inputs));
  std::vector<DeviceTensors> sharded;
  for (size_t i = 0; i < inputs.size(); ++i) {
    ASSIGN_OR_RETURN(DeviceTensors d,
                     ShardData(inputs[i], program.input_shardings[i],
                               program.devices, options.pad_value));
    sharded.push_back(std::move(d));
  }
  ASSIGN_OR_RETURN(std::vector<DeviceTensors> outputs,
                   EvaluateSpmd(program, sharded));
  EquivalenceReport report;
  report.stats = ComputeCollectiveStats(program.graph);
  report.pass = true;
  for (size_t o = 0; o < outputs.size(); ++o) {
    ASSIGN_OR_RETURN(Tensor got,
                     AssembleData(outputs[o], program.output_shardings[o],
                                  program.output_shapes[o], program.devices,
                                  std::max(options.rtol, 1e-6)));
    const Tensor& want = expected[o];
    const bool exact = want.shape().dtype != DType::kF32;
    for (int64_t k = 0; k < want.size(); ++k) {
      const double a = got.flat(k), b = want.flat(k);
      if (std::isnan(a) && std::isnan(b)) continue;
      if (a == b) continue;
      const double abs_err = std::fabs(a - b);
      const double rel_err = abs_err / std::max(std::fabs(b), 1e-30);
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, rel_err);
      if (exact || !(abs_err <= options.atol + options.rtol * std::fabs(b))) {
        report.pass = false;
        if (report.mismatches.size() < 8) {
          report.mismatches.push_back(absl::StrCat(
              "output ", o, " element ", k, ": got ", a, ", want ", b));
        }
      }
    }
  }
  return report;
}

std::vector<Tensor> RandomInputs(const Graph& graph, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> real(-1.0, 1.0);
  std::uniform_int_distribution<int> integer(-8, 8);
  std::bernoulli_distribution coin(0.5);
  std::vector<Tensor> out;
  for (int64_t id : graph.Parameters()) {
    const Shape& shape = graph.instr(id).shape;
    std::vector<double> values(shape.num_elements());
    for (double& v : values) {
      switch (shape.dtype) {
        case DType::kF32: v = real(rng); break;
        case DType::kPred: v = coin(rng); break;
        case DType::kU32: v = std::abs(integer(rng)); break;
        default: v = integer(rng); break;
      }
    }
    out.emplace_back(shape, std::move(values));
  }
  return out;
}

}  // namespace shardlab
