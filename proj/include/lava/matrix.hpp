// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace lava {

/// Dense row-major matrix of doubles. Vectors are 1 x n rows.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  static Matrix row_vector(std::span<const double> values);
  static Matrix row_vector(std::initializer_list<double> values);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double* data() noexcept { return values_.data(); }
  const double* data() const noexcept { return values_.data(); }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }

  Matrix row_copy(std::size_t r) const;
  void fill(double v);

  /// Exact (bitwise for finite values) equality of shape and contents.
  friend bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.values_ == b.values_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

bool same_shape(const Matrix& a, const Matrix& b) noexcept;
bool all_finite(const Matrix& m) noexcept;
double max_abs(const Matrix& m) noexcept;
double frobenius(const Matrix& m) noexcept;

// Dense products on the active SIMD kernel table.
Matrix matmul(const Matrix& a, const Matrix& b);           // a * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);        // a * b^T
Matrix matmul_tn(const Matrix& a, const Matrix& b);        // a^T * b
void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out);     // out += a * b
void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out);  // out += a * b^T
void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out);  // out += a^T * b
Matrix transpose(const Matrix& a);

/// out += alpha * x (same shape).
void add_scaled(Matrix& out, const Matrix& x, double alpha = 1.0);

/// Row-block concatenation of matrices sharing a column count.
Matrix vstack(std::span<const Matrix* const> parts);
Matrix vstack(std::initializer_list<const Matrix*> parts);

/// Gram matrix of the rows after L2 normalization (pairwise cosines).
Matrix cosine_gram(const Matrix& rows);

}  // namespace lava
