// SPDX-License-Identifier: Apache-2.0
#include "lava/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lava/error.hpp"
#include "lava/numerics.hpp"
#include "lava/simd.hpp"

namespace lava {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows * cols) {
    throw ContractViolation("matrix: value count " + std::to_string(values_.size()) +
                            " does not match shape " + std::to_string(rows) + "x" +
                            std::to_string(cols));
  }
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

Matrix Matrix::row_vector(std::initializer_list<double> values) {
  return Matrix(1, values.size(), std::vector<double>(values));
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractViolation("matrix: ragged row list");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(values));
}

Matrix Matrix::row_copy(std::size_t r) const { return row_vector(row(r)); }

void Matrix::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool same_shape(const Matrix& a, const Matrix& b) noexcept {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

bool all_finite(const Matrix& m) noexcept {
  return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
}

double max_abs(const Matrix& m) noexcept {
  double best = 0.0;
  for (double v : m.values()) best = std::max(best, std::abs(v));
  return best;
}

double frobenius(const Matrix& m) noexcept {
  return std::sqrt(simd::kernels().dot(m.data(), m.data(), m.size()));
}

void matmul_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols()) {
    throw ContractViolation("matmul: shapes " + shape_str(a) + " * " + shape_str(b) + " -> " +
                            shape_str(out));
  }
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* dst = out.data() + i * out.cols();
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double s = a(i, p);
      if (s != 0.0) k.axpy(s, b.data() + p * b.cols(), dst, b.cols());
    }
  }
}

void matmul_nt_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows()) {
    throw ContractViolation("matmul_nt: shapes " + shape_str(a) + " * " + shape_str(b) + "^T -> " +
                            shape_str(out));
  }
  const auto& k = simd::kernels();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) {
      out(i, j) += k.dot(a.data() + i * a.cols(), b.data() + j * b.cols(), a.cols());
    }
  }
}

void matmul_tn_acc(const Matrix& a, const Matrix& b, Matrix& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols()) {
    throw ContractViolation("matmul_tn: shapes " + shape_str(a) + "^T * " + shape_str(b) + " -> " +
                            shape_str(out));
  }
  const auto& k = simd::kernels();
  for (std::size_t p = 0; p < a.rows(); ++p) {
    const double* src = b.data() + p * b.cols();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = a(p, i);
      if (s != 0.0) k.axpy(s, src, out.data() + i * out.cols(), b.cols());
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  matmul_acc(a, b, out);
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.rows());
  matmul_nt_acc(a, b, out);
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols(), b.cols());
  matmul_tn_acc(a, b, out);
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

void add_scaled(Matrix& out, const Matrix& x, double alpha) {
  if (!same_shape(out, x)) {
    throw ContractViolation("add_scaled: shape " + shape_str(x) + " into " + shape_str(out));
  }
  simd::kernels().axpy(alpha, x.data(), out.data(), out.size());
}

Matrix vstack(std::span<const Matrix* const> parts) {
  std::size_t rows = 0;
  std::size_t cols = parts.empty() ? 0 : parts.front()->cols();
  for (const Matrix* p : parts) {
    if (p->cols() != cols) throw ContractViolation("vstack: column count mismatch");
    rows += p->rows();
  }
  std::vector<double> values;
  values.reserve(rows * cols);
  for (const Matrix* p : parts) values.insert(values.end(), p->values().begin(), p->values().end());
  return Matrix(rows, cols, std::move(values));
}

Matrix vstack(std::initializer_list<const Matrix*> parts) {
  return vstack(std::span<const Matrix* const>(parts.begin(), parts.size()));
}

Matrix cosine_gram(const Matrix& rows) {
  Matrix g(rows.rows(), rows.rows());
  for (std::size_t i = 0; i < rows.rows(); ++i)
    for (std::size_t j = 0; j < rows.rows(); ++j)
      g(i, j) = cosine_similarity(rows.row(i), rows.row(j));
  return g;
}

}  // namespace lava
