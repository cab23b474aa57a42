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

#include "shardlab/propagation/propagation.h"

#include <set>

#include "absl/strings/str_cat.h"
#include "json.hpp"
#include "shardlab/ir/verifier.h"
#include "shardlab/util/status_macros.h"

namespace shardlab {

namespace {

class Propagator {
 public:
  Propagator(const Graph& graph, const PropagationOptions& options)
      : graph_(graph), options_(options), current_(graph.size()) {
    for (int64_t i = 0; i < graph.size(); ++i) {
      current_[i] = graph.instr(i).sharding;
    }
  }

  PropagationReport Run() {
    const int64_t cap = options_.max_iterations > 0 ? options_.max_iterations
                                                    : 10 * graph_.size();
    if (options_.use_priorities) {
      for (int tier = 0; tier < kNumTiers && !report_.hit_iteration_cap;
           ++tier) {
        RunToFixedPoint(tier, cap);
      }
    } else {
      RunToFixedPoint(kNumTiers, cap);
    }
    ++report_.effective_iterations;
    for (int64_t i = 0; i < graph_.size(); ++i) {
      report_.final_shardings.push_back(
          current_[i].value_or(Sharding::Replicate()));
    }
    return std::move(report_);
  }

 private:
  void RunToFixedPoint(int max_tier, int64_t cap) {
    while (true) {
      if (report_.iterations >= cap) {
        report_.hit_iteration_cap = true;
        report_.diagnostics.push_back(absl::StrCat(
            "propagation stopped after ", cap, " iterations without reaching "
            "a fixed point"));
        return;
      }
      ++report_.iterations;
      bool changed = false;
      for (int64_t i = 0; i < graph_.size(); ++i) {
        changed |= Forward(i, max_tier);
      }
      for (int64_t i = graph_.size() - 1; i >= 0; --i) {
        changed |= Backward(i, max_tier);
      }
      if (changed) ++report_.effective_iterations;
      if (!changed) return;
    }
  }

  bool Forward(int64_t id, int max_tier) {
    const Instruction& instr = graph_.instr(id);
    std::optional<int> tier = RuleTier(instr.opcode, Direction::kForward);
    if (!tier.has_value() || *tier > max_tier) return false;
    std::vector<std::optional<Sharding>> ops;
    for (int64_t op : instr.operands) ops.push_back(current_[op]);
    std::optional<Sharding> candidate = InferForward(graph_, id, ops);
    if (!candidate.has_value()) return false;
    return Update(id, *candidate, instr, Direction::kForward, *tier);
  }

  bool Backward(int64_t id, int max_tier) {
    const Instruction& instr = graph_.instr(id);
    std::optional<int> tier = RuleTier(instr.opcode, Direction::kBackward);
    if (!tier.has_value() || *tier > max_tier || !current_[id].has_value()) {
      return false;
    }
    bool changed = false;
    for (size_t k = 0; k < instr.operands.size(); ++k) {
      std::optional<Sharding> candidate =
          InferBackward(graph_, id, *current_[id], k);
      if (!candidate.has_value()) continue;
      changed |= Update(instr.operands[k], *candidate, instr,
                        Direction::kBackward, *tier);
    }
    return changed;
  }

  // Accepts merge(current, candidate) only when it strictly refines the
  // current sharding and leaves user-specified dims alone.
  bool Update(int64_t id, const Sharding& candidate, const Instruction& source,
              Direction direction, int tier) {
    const Instruction& target = graph_.instr(id);
    const int64_t rank = target.shape.rank();
    const std::optional<Sharding>& user = target.sharding;
    if (user.has_value() && user->unspecified_dims().empty()) return false;
    const Sharding current = current_[id].value_or(Sharding::Replicate());
    std::optional<Sharding> merged = MergeShardings(
        current.WithUnspecifiedDims({}), candidate.WithUnspecifiedDims({}),
        rank);
    if (!merged.has_value() || merged->total_tiles() <= current.total_tiles()) {
      return false;
    }
    if (user.has_value()) {
      const std::set<int64_t>& open = user->unspecified_dims();
      std::vector<int64_t> open_dims(open.begin(), open.end());
      std::vector<int64_t> devices = merged->devices();
      if (!SameTiling(ReplicateDims(*merged, rank, open_dims),
                      ReplicateDims(user->WithUnspecifiedDims({}), rank,
                                    open_dims),
                      rank, devices)) {
        return false;
      }
      *merged = merged->WithUnspecifiedDims(open);
    }
    report_.changes.push_back(ShardingChange{
        report_.iterations, id, current_[id], *merged,
        std::string(OpcodeName(source.opcode)), direction, tier});
    current_[id] = *merged;
    return true;
  }

  const Graph& graph_;
  const PropagationOptions& options_;
  std::vector<std::optional<Sharding>> current_;
  PropagationReport report_;
};

}  // namespace

absl::StatusOr<std::pair<Graph, PropagationReport>> Propagate(
    const Graph& graph, const PropagationOptions& options) {
  RETURN_IF_ERROR(ValidateGraphStatus(graph));
  PropagationReport report = Propagator(graph, options).Run();
  Graph out = graph;
  for (int64_t i = 0; i < out.size(); ++i) {
    out.instructions[i].sharding = report.final_shardings[i];
  }
  return std::make_pair(std::move(out), std::move(report));
}

std::string PropagationTraceJson(const Graph& graph,
                                 const PropagationReport& report) {
  nlohmann::json j;
  j["iterations"] = report.iterations;
  j["effective_iterations"] = report.effective_iterations;
  j["hit_iteration_cap"] = report.hit_iteration_cap;
  j["diagnostics"] = report.diagnostics;
  nlohmann::json changes = nlohmann::json::array();
  for (const ShardingChange& c : report.changes) {
    changes.push_back({
        {"iteration", c.iteration},
        {"instruction", graph.instr(c.instruction).name},
        {"old", c.old_sharding.has_value() ? c.old_sharding->ToString()
                                           : std::string("none")},
        {"new", c.new_sharding.ToString()},
        {"rule", c.rule},
        {"direction",
         c.direction == Direction::kForward ? "forward" : "backward"},
        {"tier", c.tier},
    });
  }
  j["changes"] = std::move(changes);
  nlohmann::json final_shardings = nlohmann::json::object();
  for (int64_t i = 0; i < graph.size(); ++i) {
    final_shardings[graph.instr(i).name] =
        report.final_shardings[i].ToString();
  }
  j["final"] = std::move(final_shardings);
  return j.dump(2);
}

}  // namespace shardlab
