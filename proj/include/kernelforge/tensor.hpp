// Copyright 2026 The KernelForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace kernelforge {

using Shape = std::vector<std::int64_t>;

/// Default per-tensor element cap (2^20).
inline constexpr std::int64_t kDefaultElementCap = std::int64_t{1} << 20;

inline std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor. Values live in a flat Eigen array so elementwise
/// work stays in expression form; matrix views are mapped on demand.
template <typename Scalar>
class BasicTensor {
 public:
  using Values = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMajorMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape)
      : shape_(std::move(shape)), values_(Values::Zero(numel(shape_))) {}
  BasicTensor(Shape shape, Values values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != numel(shape_)) {
      throw std::invalid_argument("tensor value count does not match shape " +
                                  shape_to_string(shape_));
    }
  }

  static BasicTensor filled(Shape shape, Scalar v) {
    BasicTensor t(std::move(shape));
    t.values_.setConstant(v);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t size() const { return values_.size(); }

  Values& values() { return values_; }
  const Values& values() const { return values_; }

  /// Rank-2 view; rank-1 tensors are viewed as a single row.
  Eigen::Map<const RowMajorMatrix> matrix() const {
    auto [r, c] = rows_cols();
    return {values_.data(), r, c};
  }
  Eigen::Map<RowMajorMatrix> matrix() {
    auto [r, c] = rows_cols();
    return {values_.data(), r, c};
  }

  bool all_finite() const { return values_.isFinite().all(); }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, values_.template cast<Other>());
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    if (a.shape_ != b.shape_) return false;
    for (Eigen::Index i = 0; i < a.values_.size(); ++i) {
      if (a.values_[i] != b.values_[i]) return false;
    }
    return true;
  }

 private:
  std::pair<Eigen::Index, Eigen::Index> rows_cols() const {
    if (shape_.size() == 1) return {1, shape_[0]};
    if (shape_.size() == 2) return {shape_[0], shape_[1]};
    throw std::logic_error("matrix view requires rank 1 or 2, got " +
                           shape_to_string(shape_));
  }

  Shape shape_;
  Values values_;
};

using Tensor = BasicTensor<double>;

/// Elementwise |a - b| <= atol + rtol * |b|. Throws on shape mismatch.
template <typename Scalar>
bool allclose(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b,
              Scalar atol, Scalar rtol) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("allclose: shape mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
  const auto& x = a.values();
  const auto& y = b.values();
  // NaN compares false on both sides, so it never counts as close.
  return ((x - y).abs() <= atol + rtol * y.abs()).all();
}

}  // namespace kernelforge
