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

#include "shardlab/partitioner/context.h"

namespace shardlab {

PartitionContext PartitionContext::Root(int64_t num_devices) {
  std::vector<int64_t> all(num_devices);
  for (int64_t i = 0; i < num_devices; ++i) all[i] = i;
  return PartitionContext({all});
}

PartitionContext::PartitionContext(std::vector<std::vector<int64_t>> groups)
    : groups_(std::move(groups)) {
  identity_ = true;
  for (size_t l = 0; l < groups_[0].size(); ++l) {
    if (groups_[0][l] != static_cast<int64_t>(l)) identity_ = false;
  }
}

std::vector<std::vector<int64_t>> PartitionContext::PhysicalGroups(
    const std::vector<std::vector<int64_t>>& logical) const {
  std::vector<std::vector<int64_t>> out;
  for (const auto& group : groups_) {
    for (const auto& lg : logical) {
      std::vector<int64_t> phys;
      for (int64_t l : lg) phys.push_back(group[l]);
      out.push_back(std::move(phys));
    }
  }
  return out;
}

std::vector<std::pair<int64_t, int64_t>> PartitionContext::PhysicalPairs(
    const std::vector<std::pair<int64_t, int64_t>>& logical) const {
  std::vector<std::pair<int64_t, int64_t>> out;
  for (const auto& group : groups_) {
    for (const auto& [s, t] : logical) out.emplace_back(group[s], group[t]);
  }
  return out;
}

std::vector<int64_t> PartitionContext::LogicalIdTable() const {
  std::vector<int64_t> table(num_devices(), 0);
  for (const auto& group : groups_) {
    for (size_t l = 0; l < group.size(); ++l) table[group[l]] = l;
  }
  return table;
}

PartitionContext PartitionContext::Group(
    const std::vector<std::vector<int64_t>>& logical_groups) const {
  return PartitionContext(PhysicalGroups(logical_groups));
}

}  // namespace shardlab
