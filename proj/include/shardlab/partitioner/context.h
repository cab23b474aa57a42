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

#ifndef SHARDLAB_PARTITIONER_CONTEXT_H_
#define SHARDLAB_PARTITIONER_CONTEXT_H_

#include <cstdint>
#include <utility>
#include <vector>

namespace shardlab {

// Maps logical partitions to physical devices. groups[g][l] is the device
// acting as logical partition l inside group g; every group runs the same
// logical computation. The root context has one group [0, 1, ..., n-1].
class PartitionContext {
 public:
  static PartitionContext Root(int64_t num_devices);
  explicit PartitionContext(std::vector<std::vector<int64_t>> groups);

  int64_t num_logical() const { return groups_[0].size(); }
  int64_t num_devices() const { return groups_.size() * groups_[0].size(); }
  const std::vector<std::vector<int64_t>>& groups() const { return groups_; }
  bool is_root() const { return groups_.size() == 1 && identity_; }

  // Logical subgroups to physical ones: each logical group is instantiated
  // once per context group.
  std::vector<std::vector<int64_t>> PhysicalGroups(
      const std::vector<std::vector<int64_t>>& logical) const;
  std::vector<std::pair<int64_t, int64_t>> PhysicalPairs(
      const std::vector<std::pair<int64_t, int64_t>>& logical) const;

  // table[device] = logical partition of that device.
  std::vector<int64_t> LogicalIdTable() const;

  // Child context in which each logical group of this context acts as a
  // unit: the child's logical partition l of child group (g, k) is device
  // groups[g][logical_groups[k][l]].
  PartitionContext Group(
      const std::vector<std::vector<int64_t>>& logical_groups) const;

  bool operator==(const PartitionContext& o) const {
    return groups_ == o.groups_;
  }
  bool operator<(const PartitionContext& o) const { return groups_ < o.groups_; }

 private:
  std::vector<std::vector<int64_t>> groups_;
  bool identity_ = false;
};

}  // namespace shardlab

#endif  // SHARDLAB_PARTITIONER_CONTEXT_H_
