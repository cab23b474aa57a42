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

#ifndef SHARDLAB_IR_TENSOR_H_
#define SHARDLAB_IR_TENSOR_H_

#include <cstdint>
#include <string>
#include <vector>

#include "absl/status/statusor.h"
#include "absl/types/span.h"
#include "shardlab/ir/shape.h"

namespace shardlab {

// A dense row-major tensor value.
//
// Elements are held as doubles and canonicalized to the dtype after every
// write: F32 values are rounded to single precision, S32/U32 wrap to 32 bits
// and PRED is 0 or 1. Every int32/uint32/float value is exactly representable,
// so integer arithmetic on small operands stays exact.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor Scalar(DType dtype, double value);
  // 0, 1, 2, ... in row-major order.
  static Tensor Iota(Shape shape);
  static Tensor Filled(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  DType dtype() const { return shape_.dtype; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  absl::Span<const double> data() const { return data_; }

  double at(absl::Span<const int64_t> index) const {
    return data_[LinearIndex(index)];
  }
  double flat(int64_t i) const { return data_[i]; }
  void set(absl::Span<const int64_t> index, double v) {
    data_[LinearIndex(index)] = Canonicalize(shape_.dtype, v);
  }
  void set_flat(int64_t i, double v) {
    data_[i] = Canonicalize(shape_.dtype, v);
  }
  int64_t LinearIndex(absl::Span<const int64_t> index) const;

  // Same elements under a new shape with equal element count.
  Tensor Reshaped(std::vector<int64_t> dims) const;

  // Nested bracket literal, e.g. [[1,2],[3,4]].
  std::string ToLiteralString() const;

  bool operator==(const Tensor& other) const = default;

  static double Canonicalize(DType dtype, double v);

 private:
  Shape shape_;
  std::vector<int64_t> strides_;
  std::vector<double> data_;
};

// Parses a nested bracket literal into a tensor of the given shape.
absl::StatusOr<Tensor> ParseTensorLiteral(absl::string_view text,
                                          const Shape& shape);

// Formats one element so that parsing it back reproduces it exactly.
std::string FormatElement(DType dtype, double v);

}  // namespace shardlab

#endif  // SHARDLAB_IR_TENSOR_H_
