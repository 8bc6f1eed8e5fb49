// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lava/matrix.hpp"

namespace lava::ad {

class Tape;

/// Handle to a recorded value. Cheap to copy; valid while its tape lives.
class Var {
 public:
  Var() = default;
  const Matrix& value() const;
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

enum class Op : std::uint8_t {
  leaf,
  constant,
  matmul,
  add,
  scale,
  softmax_rows,
  layer_norm_rows,
  gelu,
  concat,
  cosine_rows,
  log,
  sum,
  slice,
};

/// Reverse-mode tape over a fixed op set. Values are recorded in call order
/// and backward() walks them in exact reverse order. Constants never receive
/// gradient; gradients of intermediate nodes are released after backward().
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  /// Borrowed constant: `value` must outlive the tape.
  Var constant_ref(const Matrix& value);
  /// Trainable leaf; its gradient is kept after backward().
  Var leaf(Matrix value);
  Var leaf_ref(const Matrix& value);

  const Matrix& value(Var v) const;
  /// Gradient of the last backward() output w.r.t. a leaf. Zero when the
  /// leaf did not participate.
  Matrix grad(Var leaf) const;
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  /// Seeds d(output)/d(output) = 1; `output` must be 1x1.
  void backward(Var output);

  std::size_t size() const noexcept { return nodes_.size(); }
  Op op(Var v) const { return nodes_[v.id()].op; }
  /// Ops replayed by the most recent backward(), in visit order.
  const std::vector<std::uint32_t>& last_backward_order() const { return backward_order_; }

 private:
  struct Node {
    Op op = Op::constant;
    std::vector<std::uint32_t> inputs;
    Matrix owned;
    const Matrix* borrowed = nullptr;
    Matrix grad;
    Matrix aux;  // per-op cache (norms, inverse std, ...)
    double param = 0.0;
    std::size_t r0 = 0, c0 = 0;  // slice origin / concat axis
    bool requires_grad = false;
    bool is_leaf = false;
    const Matrix& val() const { return borrowed != nullptr ? *borrowed : owned; }
  };

  friend Var matmul(Var a, Var b, bool transpose_b);
  friend Var add(Var a, Var b);
  friend Var scale(Var a, double c);
  friend Var softmax_rows(Var a, double tau);
  friend Var layer_norm_rows(Var a, double eps);
  friend Var gelu(Var a);
  friend Var concat(std::span<const Var> parts, int axis);
  friend Var cosine_rows(Var anchors, Var v);
  friend Var log(Var a);
  friend Var sum(Var a);
  friend Var slice(Var a, std::size_t r0, std::size_t rows, std::size_t c0, std::size_t cols);

  Var push(Op op, std::vector<std::uint32_t> inputs, Matrix value);
  Node& node(Var v) { return nodes_[v.id()]; }
  static void check_same_tape(Var a, Var b);
  void accumulate(std::uint32_t id, const Matrix& g);
  Matrix& grad_buffer(std::uint32_t id);
  void backward_node(std::uint32_t id);

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> backward_order_;
};

/// a * b, or a * b^T when transpose_b.
Var matmul(Var a, Var b, bool transpose_b = false);
/// Elementwise sum; b may also be a 1 x cols row broadcast over a's rows.
Var add(Var a, Var b);
Var scale(Var a, double c);
/// Row-wise softmax of x / tau with max subtraction.
Var softmax_rows(Var a, double tau = 1.0);
/// Row-wise (x - mean) / sqrt(var + eps), no affine part.
Var layer_norm_rows(Var a, double eps = 1e-5);
/// Exact erf GELU.
Var gelu(Var a);
/// axis 0 stacks rows, axis 1 stacks columns.
Var concat(std::span<const Var> parts, int axis);
/// 1 x n row of cosine similarities of the 1 x d row `v` against each anchor row.
Var cosine_rows(Var anchors, Var v);
/// Elementwise log(max(x, 1e-12)).
Var log(Var a);
/// Sum of all entries as 1 x 1.
Var sum(Var a);
Var slice(Var a, std::size_t r0, std::size_t rows, std::size_t c0, std::size_t cols);

inline Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }
inline Var concat_rows(std::span<const Var> parts) { return concat(parts, 0); }
inline Var concat_cols(std::span<const Var> parts) { return concat(parts, 1); }
inline Var row_of(Var a, std::size_t r) { return slice(a, r, 1, 0, a.cols()); }

}  // namespace lava::ad
