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

#include "shardlab/ir/shape.h"

#include "absl/strings/str_cat.h"
#include "absl/strings/str_join.h"

namespace shardlab {

absl::string_view DTypeName(DType dtype) {
  switch (dtype) {
    case DType::kF32:
      return "f32";
    case DType::kS32:
      return "s32";
    case DType::kU32:
      return "u32";
    case DType::kPred:
      return "pred";
  }
  return "?";
}

std::optional<DType> ParseDType(absl::string_view name) {
  if (name == "f32") return DType::kF32;
  if (name == "s32") return DType::kS32;
  if (name == "u32") return DType::kU32;
  if (name == "pred") return DType::kPred;
  return std::nullopt;
}

int64_t DTypeByteSize(DType dtype) { return dtype == DType::kPred ? 1 : 4; }

bool IsIntegral(DType dtype) { return dtype != DType::kF32; }

int64_t Shape::num_elements() const { return Product(dims); }

Shape Shape::WithDim(int64_t i, int64_t size) const {
  Shape s = *this;
  s.dims[i] = size;
  return s;
}

std::string Shape::ToString() const {
  return absl::StrCat(DTypeName(dtype), "[", absl::StrJoin(dims, ","), "]");
}

std::vector<int64_t> RowMajorStrides(absl::Span<const int64_t> dims) {
  std::vector<int64_t> strides(dims.size(), 1);
  for (int64_t i = static_cast<int64_t>(dims.size()) - 2; i >= 0; --i) {
    strides[i] = strides[i + 1] * dims[i + 1];
  }
  return strides;
}

int64_t Product(absl::Span<const int64_t> dims) {
  int64_t p = 1;
  for (int64_t d : dims) p *= d;
  return p;
}

int64_t CeilOfRatio(int64_t a, int64_t b) { return (a + b - 1) / b; }

int64_t FloorDiv(int64_t a, int64_t b) {
  int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

void ForEachIndex(absl::Span<const int64_t> dims,
                  const std::function<void(absl::Span<const int64_t>)>& fn) {
  for (int64_t d : dims) {
    if (d == 0) return;
  }
  std::vector<int64_t> index(dims.size(), 0);
  while (true) {
    fn(index);
    int64_t i = static_cast<int64_t>(dims.size()) - 1;
    for (; i >= 0; --i) {
      if (++index[i] < dims[i]) break;
      index[i] = 0;
    }
    if (i < 0) return;
  }
}

}  // namespace shardlab
