// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace isq {

/// Dense row-major shape. NCHW for 4-D activations, OIHW for conv weights,
/// [rows, cols] for 2-D.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::int64_t> dims);
  explicit Shape(std::vector<std::int64_t> dims);

  std::size_t rank() const noexcept { return dims_.size(); }
  std::int64_t operator[](std::size_t i) const { return dims_.at(i); }
  const std::vector<std::int64_t>& dims() const noexcept { return dims_; }
  std::int64_t numel() const noexcept;

  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::int64_t> dims_;
};

/// Real zone: f32 values, all finite.
class TensorF {
 public:
  TensorF() = default;
  TensorF(Shape shape, std::vector<float> data);

  static TensorF zeros(Shape shape);

  const Shape& shape() const noexcept { return shape_; }
  std::span<const float> data() const noexcept { return data_; }
  float operator[](std::size_t i) const { return data_[i]; }
  std::int64_t numel() const noexcept { return static_cast<std::int64_t>(data_.size()); }

  TensorF reshaped(Shape shape) const;

  /// Bitwise comparison (distinguishes -0.0 from 0.0).
  bool bit_equal(const TensorF& other) const noexcept;

  friend bool operator==(const TensorF&, const TensorF&) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

/// Quantized zone: integer codes inside a declared range [lo, hi].
/// Codes are stored widened to 16 bits so unsigned 8-bit grids ([0, 255])
/// share the type with signed ones.
class TensorQ {
 public:
  TensorQ() = default;
  TensorQ(Shape shape, std::vector<std::int16_t> data, int lo, int hi);

  const Shape& shape() const noexcept { return shape_; }
  std::span<const std::int16_t> data() const noexcept { return data_; }
  std::int16_t operator[](std::size_t i) const { return data_[i]; }
  std::int64_t numel() const noexcept { return static_cast<std::int64_t>(data_.size()); }
  int lo() const noexcept { return lo_; }
  int hi() const noexcept { return hi_; }

  TensorQ reshaped(Shape shape) const;

  friend bool operator==(const TensorQ&, const TensorQ&) = default;

 private:
  Shape shape_;
  std::vector<std::int16_t> data_;
  int lo_ = 0;
  int hi_ = 0;
};

/// 32-bit accumulator produced by integer conv / matmul.
class TensorAcc {
 public:
  TensorAcc() = default;
  TensorAcc(Shape shape, std::vector<std::int32_t> data);

  const Shape& shape() const noexcept { return shape_; }
  std::span<const std::int32_t> data() const noexcept { return data_; }
  std::int32_t operator[](std::size_t i) const { return data_[i]; }
  std::int64_t numel() const noexcept { return static_cast<std::int64_t>(data_.size()); }

  friend bool operator==(const TensorAcc&, const TensorAcc&) = default;

 private:
  Shape shape_;
  std::vector<std::int32_t> data_;
};

}  // namespace isq
