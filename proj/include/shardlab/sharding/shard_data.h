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

#ifndef SHARDLAB_SHARDING_SHARD_DATA_H_
#define SHARDLAB_SHARDING_SHARD_DATA_H_

#include <cstdint>
#include <map>

#include "absl/status/statusor.h"
#include "absl/types/span.h"
#include "shardlab/ir/tensor.h"
#include "shardlab/sharding/sharding.h"

namespace shardlab {

using DeviceTensors = std::map<int64_t, Tensor>;

// Splits `full` into per-device shards. Shards have ShardShape(); elements
// past the end of the data are filled with `pad_value`. `devices` lists the
// participating devices (used when the sharding is replicated).
absl::StatusOr<DeviceTensors> ShardData(const Tensor& full,
                                        const Sharding& sharding,
                                        absl::Span<const int64_t> devices,
                                        double pad_value = 0.0);

// Inverse of ShardData. Replicas must agree on the valid (non-padding)
// region: exactly for integer dtypes, within `tolerance` relative for F32.
absl::StatusOr<Tensor> AssembleData(const DeviceTensors& shards,
                                    const Sharding& sharding,
                                    const Shape& full_shape,
                                    absl::Span<const int64_t> devices,
                                    double tolerance = 1e-5);

}  // namespace shardlab

#endif  // SHARDLAB_SHARDING_SHARD_DATA_H_
