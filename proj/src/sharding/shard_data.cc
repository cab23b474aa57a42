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

#include "shardlab/sharding/shard_data.h"

#include <cmath>

#include "absl/status/status.h"
#include "absl/strings/str_cat.h"

namespace shardlab {

namespace {

std::vector<int64_t> Offsets(const Sharding& sharding, const Shape& shape,
                             int64_t device) {
  std::vector<int64_t> offsets(shape.rank());
  for (int64_t i = 0; i < shape.rank(); ++i) {
    offsets[i] = *ShardOffset(sharding, shape, device, i);
  }
  return offsets;
}

bool Close(DType dtype, double a, double b, double tolerance) {
  if (IsIntegral(dtype)) return a == b;
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  if (a == b) return true;
  return std::abs(a - b) <= tolerance * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace

absl::StatusOr<DeviceTensors> ShardData(const Tensor& full,
                                        const Sharding& sharding,
                                        absl::Span<const int64_t> devices,
                                        double pad_value) {
  absl::StatusOr<Shape> shard_shape = ShardShape(full.shape(), sharding);
  if (!shard_shape.ok()) return shard_shape.status();
  DeviceTensors out;
  for (int64_t device : ShardingDevices(sharding, devices)) {
    std::vector<int64_t> offsets = Offsets(sharding, full.shape(), device);
    Tensor shard(*shard_shape);
    std::vector<int64_t> src(full.shape().rank());
    ForEachIndex(shard_shape->dims, [&](absl::Span<const int64_t> index) {
      bool in_range = true;
      for (size_t i = 0; i < index.size(); ++i) {
        src[i] = offsets[i] + index[i];
        if (src[i] >= full.shape().dims[i]) in_range = false;
      }
      shard.set(index, in_range ? full.at(src) : pad_value);
    });
    out.emplace(device, std::move(shard));
  }
  return out;
}

absl::StatusOr<Tensor> AssembleData(const DeviceTensors& shards,
                                    const Sharding& sharding,
                                    const Shape& full_shape,
                                    absl::Span<const int64_t> devices,
                                    double tolerance) {
  absl::StatusOr<Shape> shard_shape = ShardShape(full_shape, sharding);
  if (!shard_shape.ok()) return shard_shape.status();
  Tensor full(full_shape);
  std::vector<bool> written(full.size(), false);
  std::vector<int64_t> writer(full.size(), -1);
  for (int64_t device : ShardingDevices(sharding, devices)) {
    auto it = shards.find(device);
    if (it == shards.end()) {
      return absl::NotFoundError(
          absl::StrCat("MissingShard: device ", device));
    }
    const Tensor& shard = it->second;
    if (shard.shape().dims != shard_shape->dims) {
      return absl::InvalidArgumentError(
          absl::StrCat("shard of device ", device, " has shape ",
                       shard.shape().ToString(), ", expected ",
                       shard_shape->ToString()));
    }
    std::vector<int64_t> offsets = Offsets(sharding, full_shape, device);
    std::vector<int64_t> dst(full_shape.rank());
    absl::Status status = absl::OkStatus();
    ForEachIndex(shard_shape->dims, [&](absl::Span<const int64_t> index) {
      if (!status.ok()) return;
      for (size_t i = 0; i < index.size(); ++i) {
        dst[i] = offsets[i] + index[i];
        if (dst[i] >= full_shape.dims[i]) return;
      }
      const int64_t linear = full.LinearIndex(dst);
      const double v = shard.at(index);
      if (written[linear]) {
        const double prev = full.flat(linear);
        if (!Close(full_shape.dtype, prev, v, tolerance)) {
          status = absl::DataLossError(absl::StrCat(
              "ReplicaDivergence: devices ", writer[linear], " and ", device,
              " differ by ", std::abs(prev - v), " at flat index ", linear));
        }
        return;
      }
      full.set_flat(linear, v);
      written[linear] = true;
      writer[linear] = device;
    });
    if (!status.ok()) return status;
  }
  for (size_t i = 0; i < written.size(); ++i) {
    if (!written[i]) {
      return absl::NotFoundError(
          absl::StrCat("MissingShard: element ", i, " not covered"));
    }
  }
  return full;
}

}  // namespace shardlab
