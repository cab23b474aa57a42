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

#include "shardlab/ir/tensor.h"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "absl/status/status.h"
#include "absl/strings/ascii.h"
#include "absl/strings/str_cat.h"

namespace shardlab {

Tensor::Tensor(Shape shape)
    : shape_(std::move(shape)),
      strides_(RowMajorStrides(shape_.dims)),
      data_(shape_.num_elements(), 0.0) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)),
      strides_(RowMajorStrides(shape_.dims)),
      data_(std::move(values)) {
  for (double& v : data_) v = Canonicalize(shape_.dtype, v);
}

Tensor Tensor::Scalar(DType dtype, double value) {
  return Tensor(Shape(dtype, {}), {value});
}

Tensor Tensor::Iota(Shape shape) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.set_flat(i, static_cast<double>(i));
  return t;
}

Tensor Tensor::Filled(Shape shape, double value) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.set_flat(i, value);
  return t;
}

int64_t Tensor::LinearIndex(absl::Span<const int64_t> index) const {
  int64_t linear = 0;
  for (size_t i = 0; i < index.size(); ++i) linear += index[i] * strides_[i];
  return linear;
}

Tensor Tensor::Reshaped(std::vector<int64_t> dims) const {
  return Tensor(Shape(shape_.dtype, std::move(dims)), data_);
}

double Tensor::Canonicalize(DType dtype, double v) {
  switch (dtype) {
    case DType::kF32:
      return static_cast<double>(static_cast<float>(v));
    case DType::kS32: {
      if (!std::isfinite(v)) return 0.0;
      int64_t i = static_cast<int64_t>(std::trunc(std::fmod(v, 4294967296.0)));
      return static_cast<double>(static_cast<int32_t>(static_cast<uint32_t>(i)));
    }
    case DType::kU32: {
      if (!std::isfinite(v)) return 0.0;
      int64_t i = static_cast<int64_t>(std::trunc(std::fmod(v, 4294967296.0)));
      return static_cast<double>(static_cast<uint32_t>(i));
    }
    case DType::kPred:
      return v != 0.0 ? 1.0 : 0.0;
  }
  return v;
}

std::string FormatElement(DType dtype, double v) {
  if (dtype == DType::kPred) return v != 0.0 ? "true" : "false";
  if (dtype != DType::kF32) return absl::StrCat(static_cast<int64_t>(v));
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string Tensor::ToLiteralString() const {
  if (shape_.rank() == 0) return FormatElement(dtype(), data_.empty() ? 0 : data_[0]);
  std::string out;
  std::vector<int64_t> index(shape_.rank(), 0);
  // Recursive descent over dimensions.
  std::function<void(int64_t, int64_t)> emit = [&](int64_t dim, int64_t base) {
    out += "[";
    for (int64_t i = 0; i < shape_.dims[dim]; ++i) {
      if (i > 0) out += ",";
      int64_t offset = base + i * strides_[dim];
      if (dim + 1 == shape_.rank()) {
        out += FormatElement(dtype(), data_[offset]);
      } else {
        emit(dim + 1, offset);
      }
    }
    out += "]";
  };
  emit(0, 0);
  return out;
}

namespace {

class LiteralParser {
 public:
  explicit LiteralParser(absl::string_view text) : text_(text) {}

  absl::Status Parse(int64_t depth, const Shape& shape,
                     std::vector<double>& out) {
    SkipSpace();
    if (depth == shape.rank()) return ParseElement(shape.dtype, out);
    if (!Consume('[')) return Error("expected '['");
    int64_t count = 0;
    SkipSpace();
    if (!Peek(']')) {
      while (true) {
        absl::Status s = Parse(depth + 1, shape, out);
        if (!s.ok()) return s;
        ++count;
        SkipSpace();
        if (Consume(',')) continue;
        break;
      }
    }
    if (!Consume(']')) return Error("expected ']'");
    if (count != shape.dims[depth]) {
      return Error(absl::StrCat("dimension ", depth, " has ", count,
                                " elements, expected ", shape.dims[depth]));
    }
    return absl::OkStatus();
  }

  bool AtEnd() {
    SkipSpace();
    return pos_ == text_.size();
  }

 private:
  absl::Status ParseElement(DType dtype, std::vector<double>& out) {
    size_t start = pos_;
    while (pos_ < text_.size() &&
           (absl::ascii_isalnum(text_[pos_]) || text_[pos_] == '-' ||
            text_[pos_] == '+' || text_[pos_] == '.')) {
      ++pos_;
    }
    std::string token(text_.substr(start, pos_ - start));
    if (token.empty()) return Error("expected number");
    if (token == "true") {
      out.push_back(1.0);
    } else if (token == "false") {
      out.push_back(0.0);
    } else {
      char* end = nullptr;
      double v = std::strtod(token.c_str(), &end);
      if (end != token.c_str() + token.size()) {
        return Error(absl::StrCat("bad number '", token, "'"));
      }
      out.push_back(Tensor::Canonicalize(dtype, v));
    }
    return absl::OkStatus();
  }
  void SkipSpace() {
    while (pos_ < text_.size() && absl::ascii_isspace(text_[pos_])) ++pos_;
  }
  bool Peek(char c) { return pos_ < text_.size() && text_[pos_] == c; }
  bool Consume(char c) {
    if (!Peek(c)) return false;
    ++pos_;
    return true;
  }
  absl::Status Error(absl::string_view msg) {
    return absl::InvalidArgumentError(
        absl::StrCat("ParseError: literal column ", pos_ + 1, ": ", msg));
  }

  absl::string_view text_;
  size_t pos_ = 0;
};

}  // namespace

absl::StatusOr<Tensor> ParseTensorLiteral(absl::string_view text,
                                          const Shape& shape) {
  LiteralParser parser(text);
  std::vector<double> values;
  absl::Status s = parser.Parse(0, shape, values);
  if (!s.ok()) return s;
  if (!parser.AtEnd()) {
    return absl::InvalidArgumentError("ParseError: trailing literal text");
  }
  return Tensor(shape, std::move(values));
}

}  // namespace shardlab
