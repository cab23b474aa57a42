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

#ifndef SHARDLAB_IR_SHAPE_H_
#define SHARDLAB_IR_SHAPE_H_

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include "absl/strings/string_view.h"
#include <vector>

#include "absl/types/span.h"

namespace shardlab {

enum class DType { kF32, kS32, kU32, kPred };

absl::string_view DTypeName(DType dtype);
std::optional<DType> ParseDType(absl::string_view name);
int64_t DTypeByteSize(DType dtype);
bool IsIntegral(DType dtype);

// A fully static tensor shape.
struct Shape {
  DType dtype = DType::kF32;
  std::vector<int64_t> dims;

  Shape() = default;
  Shape(DType dtype, std::vector<int64_t> dims)
      : dtype(dtype), dims(std::move(dims)) {}

  int64_t rank() const { return static_cast<int64_t>(dims.size()); }
  int64_t dim(int64_t i) const { return dims[i]; }
  int64_t num_elements() const;
  int64_t byte_size() const { return num_elements() * DTypeByteSize(dtype); }

  // Same dims, different dtype.
  Shape WithDType(DType d) const { return Shape(d, dims); }
  Shape WithDim(int64_t i, int64_t size) const;

  std::string ToString() const;

  bool operator==(const Shape& other) const = default;
};

// Row-major strides for `dims`.
std::vector<int64_t> RowMajorStrides(absl::Span<const int64_t> dims);
int64_t Product(absl::Span<const int64_t> dims);
int64_t CeilOfRatio(int64_t a, int64_t b);
// Floor division that is correct for negative numerators.
int64_t FloorDiv(int64_t a, int64_t b);

// Calls `fn` with every multi-index of `dims` in row-major order.
void ForEachIndex(absl::Span<const int64_t> dims,
                  const std::function<void(absl::Span<const int64_t>)>& fn);

}  // namespace shardlab

#endif  // SHARDLAB_IR_SHAPE_H_
