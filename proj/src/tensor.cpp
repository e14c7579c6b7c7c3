// SPDX-License-Identifier: Apache-2.0
#include "isq/tensor.hpp"

#include <cmath>
#include <cstring>

#include "isq/error.hpp"

namespace isq {

Shape::Shape(std::initializer_list<std::int64_t> dims) : Shape(std::vector<std::int64_t>(dims)) {}

Shape::Shape(std::vector<std::int64_t> dims) : dims_(std::move(dims)) {
  if (dims_.empty()) throw Error("tensor.bad_shape", "shape must have rank >= 1");
  for (auto d : dims_) {
    if (d < 1) throw Error("tensor.bad_shape", "non-positive dimension in " + str());
  }
}

std::int64_t Shape::numel() const noexcept {
  if (dims_.empty()) return 0;
  std::int64_t n = 1;
  for (auto d : dims_) n *= d;
  return n;
}

std::string Shape::str() const {
  std::string s = "[";
  for (std::size_t i = 0; i < dims_.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(dims_[i]);
  }
  return s + "]";
}

TensorF::TensorF(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
    throw Error("tensor.size_mismatch",
                "f32 tensor " + shape_.str() + " given " + std::to_string(data_.size()) + " values");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw Error("tensor.non_finite", "non-finite value at flat index " + std::to_string(i),
                  ErrorKind::Internal);
    }
  }
}

TensorF TensorF::zeros(Shape shape) {
  auto n = static_cast<std::size_t>(shape.numel());
  return TensorF(std::move(shape), std::vector<float>(n, 0.0f));
}

TensorF TensorF::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw Error("tensor.size_mismatch", "cannot reshape " + shape_.str() + " to " + shape.str());
  }
  TensorF out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

bool TensorF::bit_equal(const TensorF& other) const noexcept {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

TensorQ::TensorQ(Shape shape, std::vector<std::int16_t> data, int lo, int hi)
    : shape_(std::move(shape)), data_(std::move(data)), lo_(lo), hi_(hi) {
  if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
    throw Error("tensor.size_mismatch",
                "quantized tensor " + shape_.str() + " given " + std::to_string(data_.size()) + " values");
  }
  if (lo_ > hi_ || lo_ < -128 || hi_ > 255) {
    throw Error("tensor.bad_range",
                "declared range [" + std::to_string(lo_) + ", " + std::to_string(hi_) + "] is not an 8-bit range");
  }
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i] < lo_ || data_[i] > hi_) {
      throw Error("tensor.out_of_range", "code " + std::to_string(data_[i]) + " at flat index " +
                                             std::to_string(i) + " outside [" + std::to_string(lo_) + ", " +
                                             std::to_string(hi_) + "]");
    }
  }
}

TensorQ TensorQ::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw Error("tensor.size_mismatch", "cannot reshape " + shape_.str() + " to " + shape.str());
  }
  TensorQ out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  out.lo_ = lo_;
  out.hi_ = hi_;
  return out;
}

TensorAcc::TensorAcc(Shape shape, std::vector<std::int32_t> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
    throw Error("tensor.size_mismatch",
                "accumulator " + shape_.str() + " given " + std::to_string(data_.size()) + " values");
  }
}

}  // namespace isq
