#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gitloss/errors.hpp"
#include "gitloss/rng.hpp"

namespace gitloss {

/// Dense row-major matrix of doubles.
///
/// A constructed matrix always has rows >= 1 and cols >= 1. The default
/// constructor yields an empty placeholder (0 x 0) that is only valid as
/// an assignment target.
class Matrix {
 public:
  Matrix() = default;

  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) {
      throw ParameterError("matrix dimensions must be >= 1, got " + shape_string(rows, cols));
    }
    data_.assign(rows * cols, fill);
  }

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (rows == 0 || cols == 0) {
      throw ParameterError("matrix dimensions must be >= 1, got " + shape_string(rows, cols));
    }
    if (data_.size() != rows * cols) {
      throw DimensionError("matrix " + shape_string(rows, cols) + " needs " +
                           std::to_string(rows * cols) + " values, got " +
                           std::to_string(data_.size()));
    }
  }

  // Nested-list literal, e.g. Matrix{{1, 2}, {3, 4}}.
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    if (rows_ == 0 || cols_ == 0) throw ParameterError("matrix literal must be non-empty");
    data_.reserve(rows_ * cols_);
    for (const auto& row : rows) {
      if (row.size() != cols_) throw DimensionError("ragged matrix literal");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix zeros_like(const Matrix& m) { return Matrix(m.rows(), m.cols()); }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  std::string shape() const { return shape_string(rows_, cols_); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }

  // Exact (bitwise for non-NaN) equality of shape and contents.
  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

  static std::string shape_string(std::size_t rows, std::size_t cols) {
    return "(" + std::to_string(rows) + "x" + std::to_string(cols) + ")";
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

inline ConstMap view(const Matrix& m) {
  return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                  static_cast<Eigen::Index>(m.cols()));
}
inline MutMap view(Matrix& m) {
  return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()),
                static_cast<Eigen::Index>(m.cols()));
}

inline void require_finite(const Matrix& m, const char* op) {
  if (!m.all_finite()) throw NumericError(std::string(op) + " produced a non-finite value");
}

}  // namespace detail

/// a * b. Throws DimensionError naming both shapes when a.cols != b.rows.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: cannot multiply " + a.shape() + " by " + b.shape());
  }
  Matrix out(a.rows(), b.cols());
  detail::view(out).noalias() = detail::view(a) * detail::view(b);
  detail::require_finite(out, "matmul");
  return out;
}

/// transpose(a) * b without materializing the transpose.
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw DimensionError("matmul_tn: cannot multiply transpose of " + a.shape() + " by " +
                         b.shape());
  }
  Matrix out(a.cols(), b.cols());
  detail::view(out).noalias() = detail::view(a).transpose() * detail::view(b);
  detail::require_finite(out, "matmul_tn");
  return out;
}

/// a * transpose(b) without materializing the transpose.
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: cannot multiply " + a.shape() + " by transpose of " +
                         b.shape());
  }
  Matrix out(a.rows(), b.rows());
  detail::view(out).noalias() = detail::view(a) * detail::view(b).transpose();
  detail::require_finite(out, "matmul_nt");
  return out;
}

enum class ElementwiseOp { add, sub, mul };

inline Matrix elementwise(const Matrix& a, const Matrix& b, ElementwiseOp op) {
  if (!a.same_shape(b)) {
    throw DimensionError("elementwise: shape mismatch " + a.shape() + " vs " + b.shape());
  }
  Matrix out(a.rows(), a.cols());
  auto lhs = a.values();
  auto rhs = b.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    switch (op) {
      case ElementwiseOp::add: dst[i] = lhs[i] + rhs[i]; break;
      case ElementwiseOp::sub: dst[i] = lhs[i] - rhs[i]; break;
      case ElementwiseOp::mul: dst[i] = lhs[i] * rhs[i]; break;
    }
  }
  detail::require_finite(out, "elementwise");
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) { return elementwise(a, b, ElementwiseOp::add); }
inline Matrix sub(const Matrix& a, const Matrix& b) { return elementwise(a, b, ElementwiseOp::sub); }
inline Matrix mul(const Matrix& a, const Matrix& b) { return elementwise(a, b, ElementwiseOp::mul); }

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
  return out;
}

inline Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.values()) v *= s;
  detail::require_finite(out, "scale");
  return out;
}

/// Per-row squared Euclidean norm.
inline std::vector<double> row_norms_sq(const Matrix& a) {
  std::vector<double> out(a.rows(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    double acc = 0.0;
    for (double v : a.row(r)) acc += v * v;
    out[r] = acc;
  }
  return out;
}

/// Sum over rows, returned as a 1 x cols matrix.
inline Matrix column_sums(const Matrix& a) {
  Matrix out(1, a.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto src = a.row(r);
    for (std::size_t c = 0; c < a.cols(); ++c) out(0, c) += src[c];
  }
  return out;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    acc += d * d;
  }
  return acc;
}

/// rows x cols samples from N(mean, stddev^2), deterministic per rng state.
inline Matrix rng_gaussian(SeededRng& rng, std::size_t rows, std::size_t cols, double mean,
                           double stddev) {
  if (!(stddev >= 0.0)) {
    throw ParameterError("rng_gaussian: stddev must be >= 0, got " + std::to_string(stddev));
  }
  Matrix out(rows, cols);
  for (double& v : out.values()) v = rng.gaussian(mean, stddev);
  return out;
}

}  // namespace gitloss
