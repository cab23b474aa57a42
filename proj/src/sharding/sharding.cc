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

#include "shardlab/sharding/sharding.h"

#include <algorithm>
#include <map>
#include <set>

#include "absl/status/status.h"
#include "absl/strings/ascii.h"
#include "absl/strings/numbers.h"
#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"
#include "absl/strings/str_split.h"
#include "absl/strings/strip.h"

namespace shardlab {

DeviceMesh DeviceMesh::Iota(std::vector<int64_t> dims) {
  DeviceMesh mesh;
  mesh.dims = std::move(dims);
  mesh.device_ids.resize(Product(mesh.dims));
  for (size_t i = 0; i < mesh.device_ids.size(); ++i) mesh.device_ids[i] = i;
  return mesh;
}

absl::Status DeviceMesh::Validate() const {
  if (static_cast<int64_t>(device_ids.size()) != Product(dims)) {
    return absl::InvalidArgumentError(
        absl::StrCat("mesh has ", device_ids.size(), " ids for ",
                     Product(dims), " positions"));
  }
  std::set<int64_t> seen;
  for (int64_t id : device_ids) {
    if (id < 0 || !seen.insert(id).second) {
      return absl::InvalidArgumentError(
          absl::StrCat("mesh device id ", id, " is negative or duplicated"));
    }
  }
  return absl::OkStatus();
}

namespace {

absl::Status ValidateDevices(absl::Span<const int64_t> tile_dims,
                             absl::Span<const int64_t> devices) {
  for (int64_t d : tile_dims) {
    if (d < 1) {
      return absl::InvalidArgumentError("tile assignment dims must be >= 1");
    }
  }
  if (static_cast<int64_t>(devices.size()) != Product(tile_dims)) {
    return absl::InvalidArgumentError(
        absl::StrCat("tile assignment needs ", Product(tile_dims),
                     " devices, got ", devices.size()));
  }
  std::set<int64_t> seen;
  for (int64_t d : devices) {
    if (d < 0) return absl::InvalidArgumentError("negative device id");
    if (!seen.insert(d).second) {
      return absl::InvalidArgumentError(
          absl::StrCat("duplicate device ", d, " in tile assignment"));
    }
  }
  return absl::OkStatus();
}

}  // namespace

Sharding Sharding::Replicate() { return Sharding(); }

absl::StatusOr<Sharding> Sharding::Tile(std::vector<int64_t> tile_dims,
                                        std::vector<int64_t> devices) {
  absl::Status s = ValidateDevices(tile_dims, devices);
  if (!s.ok()) return s;
  Sharding sharding;
  sharding.kind_ = Kind::kTiled;
  sharding.tile_dims_ = std::move(tile_dims);
  sharding.devices_ = std::move(devices);
  return sharding;
}

absl::StatusOr<Sharding> Sharding::PartialTile(std::vector<int64_t> tile_dims,
                                               std::vector<int64_t> devices) {
  if (tile_dims.empty()) {
    return absl::InvalidArgumentError(
        "partial tiling needs a replication dimension");
  }
  absl::Status s = ValidateDevices(tile_dims, devices);
  if (!s.ok()) return s;
  if (tile_dims.back() == 1) {
    tile_dims.pop_back();
    return Tile(std::move(tile_dims), std::move(devices));
  }
  if (Product(tile_dims) == tile_dims.back()) return Replicate();
  Sharding sharding;
  sharding.kind_ = Kind::kPartialTiled;
  sharding.tile_dims_ = std::move(tile_dims);
  sharding.devices_ = std::move(devices);
  return sharding;
}

int64_t Sharding::data_rank() const {
  switch (kind_) {
    case Kind::kReplicated:
      return -1;
    case Kind::kTiled:
      return tile_dims_.size();
    case Kind::kPartialTiled:
      return tile_dims_.size() - 1;
  }
  return -1;
}

int64_t Sharding::num_tiles(int64_t dim) const {
  if (IsReplicated() || dim >= data_rank()) return 1;
  return tile_dims_[dim];
}

int64_t Sharding::total_tiles() const {
  if (IsReplicated()) return 1;
  return Product(tile_dims_) / replication_size();
}

int64_t Sharding::replication_size() const {
  return IsPartialTiled() ? tile_dims_.back() : 1;
}

bool Sharding::HasDevice(int64_t device) const {
  return std::find(devices_.begin(), devices_.end(), device) != devices_.end();
}

std::optional<std::vector<int64_t>> Sharding::TileCoordinate(
    int64_t device, int64_t rank) const {
  if (IsReplicated()) return std::vector<int64_t>(rank, 0);
  if (rank != data_rank()) return std::nullopt;
  auto it = std::find(devices_.begin(), devices_.end(), device);
  if (it == devices_.end()) return std::nullopt;
  int64_t linear = it - devices_.begin();
  std::vector<int64_t> strides = RowMajorStrides(tile_dims_);
  std::vector<int64_t> coord(rank);
  for (int64_t i = 0; i < rank; ++i) coord[i] = (linear / strides[i]) % tile_dims_[i];
  return coord;
}

std::optional<int64_t> Sharding::ReplicaIndex(int64_t device) const {
  if (IsReplicated()) return std::nullopt;
  auto it = std::find(devices_.begin(), devices_.end(), device);
  if (it == devices_.end()) return std::nullopt;
  if (!IsPartialTiled()) return 0;
  return (it - devices_.begin()) % tile_dims_.back();
}

int64_t Sharding::DeviceAt(absl::Span<const int64_t> full_index) const {
  std::vector<int64_t> strides = RowMajorStrides(tile_dims_);
  int64_t linear = 0;
  for (size_t i = 0; i < full_index.size(); ++i) linear += full_index[i] * strides[i];
  return devices_[linear];
}

std::vector<int64_t> Sharding::ShardedDims() const {
  std::vector<int64_t> dims;
  for (int64_t i = 0; i < data_rank(); ++i) {
    if (tile_dims_[i] > 1) dims.push_back(i);
  }
  return dims;
}

Sharding Sharding::WithUnspecifiedDims(std::set<int64_t> dims) const {
  Sharding s = *this;
  s.unspecified_dims_ = std::move(dims);
  return s;
}

std::string Sharding::ToString() const {
  std::string out;
  if (IsReplicated()) {
    out = "replicated";
  } else {
    out = absl::StrCat("devices=[", absl::StrJoin(tile_dims_, ","), "]",
                       absl::StrJoin(devices_, ","));
    if (IsPartialTiled()) absl::StrAppend(&out, " last_tile_dim_replicate");
  }
  if (!unspecified_dims_.empty()) {
    absl::StrAppend(&out, " unspecified_dims={",
                    absl::StrJoin(unspecified_dims_, ","), "}");
  }
  return out;
}

namespace {

absl::StatusOr<std::vector<int64_t>> ParseIntList(absl::string_view text) {
  std::vector<int64_t> values;
  text = absl::StripAsciiWhitespace(text);
  if (text.empty()) return values;
  for (absl::string_view piece : absl::StrSplit(text, ',')) {
    int64_t v;
    if (!absl::SimpleAtoi(absl::StripAsciiWhitespace(piece), &v)) {
      return absl::InvalidArgumentError(
          absl::StrCat("ParseError: expected integer, got '", piece, "'"));
    }
    values.push_back(v);
  }
  return values;
}

}  // namespace

absl::StatusOr<Sharding> Sharding::Parse(absl::string_view text) {
  text = absl::StripAsciiWhitespace(text);
  std::set<int64_t> unspecified;
  size_t u = text.find("unspecified_dims={");
  if (u != absl::string_view::npos) {
    size_t close = text.find('}', u);
    if (close == absl::string_view::npos) {
      return absl::InvalidArgumentError("ParseError: unterminated unspecified_dims");
    }
    auto dims = ParseIntList(text.substr(u + 18, close - u - 18));
    if (!dims.ok()) return dims.status();
    unspecified.insert(dims->begin(), dims->end());
    if (absl::StripAsciiWhitespace(text.substr(close + 1)).size() != 0) {
      return absl::InvalidArgumentError("ParseError: trailing sharding text");
    }
    text = absl::StripAsciiWhitespace(text.substr(0, u));
  }
  Sharding result;
  if (text == "replicated") {
    result = Replicate();
  } else if (absl::ConsumePrefix(&text, "devices=[")) {
    size_t close = text.find(']');
    if (close == absl::string_view::npos) {
      return absl::InvalidArgumentError("ParseError: expected ']' in devices");
    }
    auto dims = ParseIntList(text.substr(0, close));
    if (!dims.ok()) return dims.status();
    text = text.substr(close + 1);
    bool partial = false;
    size_t l = text.find(" last_tile_dim_replicate");
    if (l != absl::string_view::npos) {
      if (absl::StripAsciiWhitespace(text.substr(l + 24)).size() != 0) {
        return absl::InvalidArgumentError("ParseError: trailing sharding text");
      }
      partial = true;
      text = text.substr(0, l);
    }
    auto devices = ParseIntList(text);
    if (!devices.ok()) return devices.status();
    absl::StatusOr<Sharding> s = partial ? PartialTile(*dims, *devices)
                                         : Tile(*dims, *devices);
    if (!s.ok()) {
      return absl::InvalidArgumentError(
          absl::StrCat("ParseError: ", s.status().message()));
    }
    result = *s;
  } else {
    return absl::InvalidArgumentError(
        absl::StrCat("ParseError: unknown sharding '", text, "'"));
  }
  result.unspecified_dims_ = std::move(unspecified);
  return result;
}

absl::StatusOr<Sharding> MeshSplit(int64_t rank, const DeviceMesh& mesh,
                                   absl::Span<const int64_t> dims_mapping) {
  absl::Status valid = mesh.Validate();
  if (!valid.ok()) return valid;
  if (static_cast<int64_t>(dims_mapping.size()) != rank) {
    return absl::InvalidArgumentError(
        absl::StrCat("RankMismatch: dims_mapping has ", dims_mapping.size(),
                     " entries for rank ", rank));
  }
  const int64_t mesh_rank = mesh.dims.size();
  std::vector<bool> used(mesh_rank, false);
  for (int64_t m : dims_mapping) {
    if (m == -1) continue;
    if (m < -1 || m >= mesh_rank) {
      return absl::InvalidArgumentError(
          absl::StrCat("MeshDimOutOfRange: mesh dim ", m));
    }
    if (used[m]) {
      return absl::InvalidArgumentError(
          absl::StrCat("DuplicateMeshDim: mesh dim ", m));
    }
    used[m] = true;
  }
  std::vector<int64_t> unused;
  for (int64_t m = 0; m < mesh_rank; ++m) {
    if (!used[m]) unused.push_back(m);
  }
  if (unused.size() == static_cast<size_t>(mesh_rank)) return Sharding::Replicate();

  std::vector<int64_t> tile_dims(rank, 1);
  for (int64_t i = 0; i < rank; ++i) {
    if (dims_mapping[i] >= 0) tile_dims[i] = mesh.dims[dims_mapping[i]];
  }
  int64_t replication = 1;
  for (int64_t m : unused) replication *= mesh.dims[m];
  std::vector<int64_t> full_dims = tile_dims;
  if (replication > 1 || !unused.empty()) full_dims.push_back(replication);

  std::vector<int64_t> devices(mesh.device_ids.size());
  std::vector<int64_t> full_strides = RowMajorStrides(full_dims);
  std::vector<int64_t> mesh_strides = RowMajorStrides(mesh.dims);
  ForEachIndex(mesh.dims, [&](absl::Span<const int64_t> mesh_index) {
    int64_t linear = 0;
    for (int64_t i = 0; i < rank; ++i) {
      if (dims_mapping[i] >= 0) linear += mesh_index[dims_mapping[i]] * full_strides[i];
    }
    int64_t rep = 0;
    for (int64_t m : unused) rep = rep * mesh.dims[m] + mesh_index[m];
    if (!unused.empty()) linear += rep;
    int64_t mesh_linear = 0;
    for (int64_t m = 0; m < mesh_rank; ++m) mesh_linear += mesh_index[m] * mesh_strides[m];
    devices[linear] = mesh.device_ids[mesh_linear];
  });
  if (unused.empty()) return Sharding::Tile(tile_dims, devices);
  return Sharding::PartialTile(full_dims, devices);
}

int64_t ShardSize(int64_t dim_size, const Sharding& sharding, int64_t dim) {
  return CeilOfRatio(dim_size, sharding.num_tiles(dim));
}

absl::StatusOr<Shape> ShardShape(const Shape& shape, const Sharding& sharding) {
  if (sharding.IsReplicated()) return shape;
  if (sharding.data_rank() != shape.rank()) {
    return absl::InvalidArgumentError(
        absl::StrCat("RankMismatch: sharding ", sharding.ToString(),
                     " applied to ", shape.ToString()));
  }
  Shape out = shape;
  for (int64_t i = 0; i < shape.rank(); ++i) {
    out.dims[i] = ShardSize(shape.dims[i], sharding, i);
  }
  return out;
}

absl::StatusOr<int64_t> ShardOffset(const Sharding& sharding,
                                    const Shape& shape, int64_t device,
                                    int64_t dim) {
  if (sharding.IsReplicated()) return 0;
  auto coord = sharding.TileCoordinate(device, shape.rank());
  if (!coord.has_value()) {
    if (sharding.data_rank() != shape.rank()) {
      return absl::InvalidArgumentError("RankMismatch: sharding rank");
    }
    return absl::NotFoundError(
        absl::StrCat("DeviceNotInSharding: device ", device, " not in ",
                     sharding.ToString()));
  }
  return (*coord)[dim] * ShardSize(shape.dims[dim], sharding, dim);
}

std::vector<int64_t> ShardingDevices(const Sharding& s,
                                     absl::Span<const int64_t> all_devices) {
  if (s.IsReplicated()) return {all_devices.begin(), all_devices.end()};
  return s.devices();
}

std::optional<Sharding> ShardingFromCoordinates(
    absl::Span<const int64_t> tile_counts, absl::Span<const int64_t> devices,
    const std::function<std::vector<int64_t>(int64_t)>& coord) {
  std::map<std::vector<int64_t>, std::vector<int64_t>> groups;
  for (int64_t d : devices) groups[coord(d)].push_back(d);
  const int64_t tiles = Product(tile_counts);
  if (static_cast<int64_t>(groups.size()) != tiles) return std::nullopt;
  const size_t replication = groups.begin()->second.size();
  for (const auto& [c, members] : groups) {
    if (members.size() != replication) return std::nullopt;
    for (size_t i = 0; i < c.size(); ++i) {
      if (c[i] < 0 || c[i] >= tile_counts[i]) return std::nullopt;
    }
  }
  if (tiles == 1) return Sharding::Replicate();
  // std::map iterates coordinates in row-major order.
  std::vector<int64_t> flat;
  flat.reserve(devices.size());
  for (const auto& [c, members] : groups) {
    flat.insert(flat.end(), members.begin(), members.end());
  }
  std::vector<int64_t> dims(tile_counts.begin(), tile_counts.end());
  if (replication == 1) return *Sharding::Tile(dims, flat);
  dims.push_back(replication);
  return *Sharding::PartialTile(dims, flat);
}

bool SameTiling(const Sharding& a, const Sharding& b, int64_t rank,
                absl::Span<const int64_t> all_devices) {
  for (int64_t i = 0; i < rank; ++i) {
    if (a.num_tiles(i) != b.num_tiles(i)) return false;
  }
  if (a.total_tiles() == 1) return true;
  for (int64_t d : all_devices) {
    auto ca = a.TileCoordinate(d, rank);
    auto cb = b.TileCoordinate(d, rank);
    if (ca != cb) return false;
  }
  return true;
}

bool IsMoreSpecific(const Sharding& a, const Sharding& b, int64_t rank) {
  (void)rank;
  return a.total_tiles() > b.total_tiles();
}

std::optional<Sharding> MergeShardings(const Sharding& s0, const Sharding& s1,
                                       int64_t rank) {
  if (s1.IsReplicated() || s1.total_tiles() == 1) return s0;
  if (s0.IsReplicated() || s0.total_tiles() == 1) return s1;
  if (s0.data_rank() != rank || s1.data_rank() != rank) return std::nullopt;
  std::vector<int64_t> d0 = s0.devices(), d1 = s1.devices();
  std::sort(d0.begin(), d0.end());
  std::sort(d1.begin(), d1.end());
  if (d0 != d1) return std::nullopt;

  std::vector<int64_t> counts(rank);
  for (int64_t i = 0; i < rank; ++i) {
    const int64_t t0 = s0.num_tiles(i), t1 = s1.num_tiles(i);
    if (t0 > 1 && t1 > 1) {
      if (t0 != t1) return std::nullopt;
      for (int64_t d : d0) {
        if ((*s0.TileCoordinate(d, rank))[i] != (*s1.TileCoordinate(d, rank))[i]) {
          return std::nullopt;
        }
      }
    }
    counts[i] = std::max(t0, t1);
  }
  auto coord = [&](int64_t d) {
    std::vector<int64_t> c0 = *s0.TileCoordinate(d, rank);
    std::vector<int64_t> c1 = *s1.TileCoordinate(d, rank);
    std::vector<int64_t> c(rank);
    for (int64_t i = 0; i < rank; ++i) c[i] = s0.num_tiles(i) > 1 ? c0[i] : c1[i];
    return c;
  };
  // Ascending device order inside each subgroup gives the lexicographically
  // smallest tile assignment among the equivalent candidates.
  std::optional<Sharding> merged = ShardingFromCoordinates(counts, d0, coord);
  if (!merged.has_value()) return std::nullopt;
  if (SameTiling(*merged, s0, rank, d0)) return s0;
  if (SameTiling(*merged, s1, rank, d0)) return s1;
  return merged;
}

Sharding ReplicateDims(const Sharding& sharding, int64_t rank,
                       absl::Span<const int64_t> dims) {
  if (sharding.IsReplicated()) return sharding;
  std::vector<int64_t> counts(rank);
  for (int64_t i = 0; i < rank; ++i) counts[i] = sharding.num_tiles(i);
  for (int64_t d : dims) counts[d] = 1;
  auto coord = [&](int64_t device) {
    std::vector<int64_t> c = *sharding.TileCoordinate(device, rank);
    for (int64_t d : dims) c[d] = 0;
    return c;
  };
  return *ShardingFromCoordinates(counts, sharding.devices(), coord);
}

Sharding TransposeShardingDims(const Sharding& sharding, int64_t rank,
                               absl::Span<const int64_t> dim_map,
                               int64_t new_rank) {
  if (sharding.IsReplicated()) return sharding;
  std::vector<int64_t> counts(new_rank, 1);
  for (int64_t i = 0; i < rank; ++i) {
    if (dim_map[i] >= 0) counts[dim_map[i]] = sharding.num_tiles(i);
  }
  auto coord = [&](int64_t device) {
    std::vector<int64_t> c = *sharding.TileCoordinate(device, rank);
    std::vector<int64_t> out(new_rank, 0);
    for (int64_t i = 0; i < rank; ++i) {
      if (dim_map[i] >= 0) out[dim_map[i]] = c[i];
    }
    return out;
  };
  return *ShardingFromCoordinates(counts, sharding.devices(), coord);
}

}  // namespace shardlab
