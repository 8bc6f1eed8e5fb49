// SPDX-License-Identifier: Apache-2.0
#include "lava/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "lava/error.hpp"
#include "lava/numerics.hpp"
#include "lava/simd.hpp"

namespace lava::ad {

namespace {

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::constant: return "constant";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::scale: return "scale";
    case Op::softmax_rows: return "softmax_rows";
    case Op::layer_norm_rows: return "layer_norm_rows";
    case Op::gelu: return "gelu";
    case Op::concat: return "concat";
    case Op::cosine_rows: return "cosine_rows";
    case Op::log: return "log";
    case Op::sum: return "sum";
    case Op::slice: return "slice";
  }
  return "?";
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }
double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

}  // namespace

const Matrix& Var::value() const { return tape_->value(*this); }

Var Tape::push(Op op, std::vector<std::uint32_t> inputs, Matrix value) {
  if (!all_finite(value)) throw NumericError(std::string("tape: non-finite output of ") + op_name(op));
  Node n;
  n.op = op;
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                [this](std::uint32_t i) { return nodes_[i].requires_grad; });
  n.inputs = std::move(inputs);
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant(Matrix value) {
  Node n;
  n.op = Op::constant;
  n.owned = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::constant_ref(const Matrix& value) {
  Node n;
  n.op = Op::constant;
  n.borrowed = &value;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::leaf(Matrix value) {
  if (!all_finite(value)) throw NumericError("tape: non-finite leaf");
  Node n;
  n.op = Op::leaf;
  n.owned = std::move(value);
  n.requires_grad = true;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Tape::leaf_ref(const Matrix& value) {
  if (!all_finite(value)) throw NumericError("tape: non-finite leaf");
  Node n;
  n.op = Op::leaf;
  n.borrowed = &value;
  n.requires_grad = true;
  n.is_leaf = true;
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

const Matrix& Tape::value(Var v) const { return nodes_.at(v.id()).val(); }

Matrix Tape::grad(Var leaf) const {
  const Node& n = nodes_.at(leaf.id());
  if (!n.is_leaf) throw ContractViolation("tape: gradients are retained for leaves only");
  if (n.grad.empty()) return Matrix(n.val().rows(), n.val().cols());
  return n.grad;
}

void Tape::check_same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw ContractViolation("tape: operands recorded on different tapes");
}

Matrix& Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Matrix(n.val().rows(), n.val().cols());
  return n.grad;
}

void Tape::accumulate(std::uint32_t id, const Matrix& g) {
  if (!nodes_[id].requires_grad) return;
  add_scaled(grad_buffer(id), g);
}

void Tape::backward(Var output) {
  const Matrix& out = value(output);
  if (out.rows() != 1 || out.cols() != 1) throw ContractViolation("tape: backward needs a 1x1 output");
  for (Node& n : nodes_) n.grad = Matrix();
  backward_order_.clear();
  if (!nodes_[output.id()].requires_grad) return;
  grad_buffer(output.id())[0] = 1.0;
  for (std::uint32_t id = output.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || n.is_leaf) continue;
    backward_order_.push_back(id);
    backward_node(id);
    n.grad = Matrix();  // intermediate gradients are not kept
  }
}

void Tape::backward_node(std::uint32_t id) {
  // Copy out what is needed: accumulate() may grow other nodes' buffers but
  // never reallocates nodes_, so references into nodes_ stay valid.
  Node& n = nodes_[id];
  const Matrix& g = n.grad;
  const auto& k = simd::kernels();
  switch (n.op) {
    case Op::leaf:
    case Op::constant:
      break;
    case Op::matmul: {
      const std::uint32_t ia = n.inputs[0], ib = n.inputs[1];
      const Matrix& a = nodes_[ia].val();
      const Matrix& b = nodes_[ib].val();
      const bool tb = n.param != 0.0;
      if (nodes_[ia].requires_grad) {
        if (tb) matmul_acc(g, b, grad_buffer(ia));
        else matmul_nt_acc(g, b, grad_buffer(ia));
      }
      if (nodes_[ib].requires_grad) {
        if (tb) matmul_tn_acc(g, a, grad_buffer(ib));
        else matmul_tn_acc(a, g, grad_buffer(ib));
      }
      break;
    }
    case Op::add: {
      const std::uint32_t ia = n.inputs[0], ib = n.inputs[1];
      accumulate(ia, g);
      if (nodes_[ib].requires_grad) {
        const Matrix& b = nodes_[ib].val();
        if (same_shape(b, g)) {
          accumulate(ib, g);
        } else {
          Matrix& gb = grad_buffer(ib);
          for (std::size_t r = 0; r < g.rows(); ++r) k.axpy(1.0, g.data() + r * g.cols(), gb.data(), g.cols());
        }
      }
      break;
    }
    case Op::scale: {
      const std::uint32_t ia = n.inputs[0];
      if (nodes_[ia].requires_grad) add_scaled(grad_buffer(ia), g, n.param);
      break;
    }
    case Op::softmax_rows: {
      const std::uint32_t ia = n.inputs[0];
      const Matrix& y = n.val();
      Matrix& ga = grad_buffer(ia);
      const double inv_tau = 1.0 / n.param;
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const double* yr = y.data() + r * y.cols();
        const double* gr = g.data() + r * g.cols();
        const double s = k.dot(yr, gr, y.cols());
        double* out = ga.data() + r * ga.cols();
        for (std::size_t c = 0; c < y.cols(); ++c) out[c] += yr[c] * (gr[c] - s) * inv_tau;
      }
      break;
    }
    case Op::layer_norm_rows: {
      const std::uint32_t ia = n.inputs[0];
      const Matrix& y = n.val();
      Matrix& ga = grad_buffer(ia);
      const std::size_t cols = y.cols();
      for (std::size_t r = 0; r < y.rows(); ++r) {
        const double* yr = y.data() + r * cols;
        const double* gr = g.data() + r * cols;
        const double mean_g = k.sum(gr, cols) / static_cast<double>(cols);
        const double mean_gy = k.dot(gr, yr, cols) / static_cast<double>(cols);
        const double rstd = n.aux[r];
        double* out = ga.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += rstd * (gr[c] - mean_g - yr[c] * mean_gy);
      }
      break;
    }
    case Op::gelu: {
      const std::uint32_t ia = n.inputs[0];
      const Matrix& x = nodes_[ia].val();
      Matrix& ga = grad_buffer(ia);
      for (std::size_t i = 0; i < x.size(); ++i) {
        ga[i] += g[i] * (normal_cdf(x[i]) + x[i] * normal_pdf(x[i]));
      }
      break;
    }
    case Op::concat: {
      const bool by_rows = n.r0 == 0;
      std::size_t offset = 0;
      for (std::uint32_t ia : n.inputs) {
        const Matrix& part = nodes_[ia].val();
        if (nodes_[ia].requires_grad) {
          Matrix& gp = grad_buffer(ia);
          for (std::size_t r = 0; r < part.rows(); ++r) {
            const double* src = by_rows ? g.data() + (offset + r) * g.cols() : g.data() + r * g.cols() + offset;
            k.axpy(1.0, src, gp.data() + r * gp.cols(), part.cols());
          }
        }
        offset += by_rows ? part.rows() : part.cols();
      }
      break;
    }
    case Op::cosine_rows: {
      const std::uint32_t ia = n.inputs[0], iv = n.inputs[1];
      const Matrix& a = nodes_[ia].val();
      const Matrix& v = nodes_[iv].val();
      const Matrix& cos = n.val();
      const std::size_t d = a.cols();
      const double nv = n.aux[a.rows()];
      const bool need_a = nodes_[ia].requires_grad;
      const bool need_v = nodes_[iv].requires_grad;
      Matrix* gv = need_v ? &grad_buffer(iv) : nullptr;
      Matrix* ga = need_a ? &grad_buffer(ia) : nullptr;
      const double nv_c = std::max(nv, kEps);
      for (std::size_t i = 0; i < a.rows(); ++i) {
        const double gi = g[i];
        if (gi == 0.0) continue;
        const double na = n.aux[i];
        const double na_c = std::max(na, kEps);
        const double inv = 1.0 / (na_c * nv_c);
        const double* ai = a.data() + i * d;
        if (ga != nullptr) {
          double* out = ga->data() + i * d;
          k.axpy(gi * inv, v.data(), out, d);
          if (na > kEps) k.axpy(-gi * cos[i] / (na * na), ai, out, d);
        }
        if (gv != nullptr) {
          k.axpy(gi * inv, ai, gv->data(), d);
          if (nv > kEps) k.axpy(-gi * cos[i] / (nv * nv), v.data(), gv->data(), d);
        }
      }
      break;
    }
    case Op::log: {
      const std::uint32_t ia = n.inputs[0];
      const Matrix& x = nodes_[ia].val();
      Matrix& ga = grad_buffer(ia);
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > kEps) ga[i] += g[i] / x[i];
      }
      break;
    }
    case Op::sum: {
      const std::uint32_t ia = n.inputs[0];
      Matrix& ga = grad_buffer(ia);
      const double s = g[0];
      for (double& v : ga.values()) v += s;
      break;
    }
    case Op::slice: {
      const std::uint32_t ia = n.inputs[0];
      Matrix& ga = grad_buffer(ia);
      for (std::size_t r = 0; r < g.rows(); ++r) {
        k.axpy(1.0, g.data() + r * g.cols(), ga.data() + (n.r0 + r) * ga.cols() + n.c0, g.cols());
      }
      break;
    }
  }
}

Var matmul(Var a, Var b, bool transpose_b) {
  Tape::check_same_tape(a, b);
  Matrix out = transpose_b ? matmul_nt(a.value(), b.value()) : matmul(a.value(), b.value());
  Var v = a.tape().push(Op::matmul, {a.id(), b.id()}, std::move(out));
  a.tape().node(v).param = transpose_b ? 1.0 : 0.0;
  return v;
}

Var add(Var a, Var b) {
  Tape::check_same_tape(a, b);
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  Matrix out = x;
  if (same_shape(x, y)) {
    add_scaled(out, y);
  } else if (y.rows() == 1 && y.cols() == x.cols()) {
    const auto& k = simd::kernels();
    for (std::size_t r = 0; r < x.rows(); ++r) k.axpy(1.0, y.data(), out.data() + r * out.cols(), x.cols());
  } else {
    throw ContractViolation("add: incompatible shapes");
  }
  return a.tape().push(Op::add, {a.id(), b.id()}, std::move(out));
}

Var scale(Var a, double c) {
  Matrix out = a.value();
  simd::kernels().scale(c, out.data(), out.size());
  Var v = a.tape().push(Op::scale, {a.id()}, std::move(out));
  a.tape().node(v).param = c;
  return v;
}

Var softmax_rows(Var a, double tau) {
  if (!(tau > 0.0)) throw ConfigError("softmax temperature must be positive", "tau");
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto p = softmax_temp(x.row(r), tau);
    std::copy(p.begin(), p.end(), out.row(r).begin());
  }
  Var v = a.tape().push(Op::softmax_rows, {a.id()}, std::move(out));
  a.tape().node(v).param = tau;
  return v;
}

Var layer_norm_rows(Var a, double eps) {
  const Matrix& x = a.value();
  const std::size_t cols = x.cols();
  Matrix out(x.rows(), cols);
  Matrix rstd(x.rows(), 1);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(cols);
    const double inv = 1.0 / std::sqrt(var + eps);
    rstd[r] = inv;
    for (std::size_t c = 0; c < cols; ++c) out(r, c) = (row[c] - mean) * inv;
  }
  Var v = a.tape().push(Op::layer_norm_rows, {a.id()}, std::move(out));
  a.tape().node(v).aux = std::move(rstd);
  return v;
}

Var gelu(Var a) {
  Matrix out = a.value();
  for (double& v : out.values()) v = v * normal_cdf(v);
  return a.tape().push(Op::gelu, {a.id()}, std::move(out));
}

Var concat(std::span<const Var> parts, int axis) {
  if (parts.empty()) throw ContractViolation("concat: no operands");
  if (axis != 0 && axis != 1) throw ContractViolation("concat: axis must be 0 or 1");
  Tape& tape = parts.front().tape();
  std::vector<std::uint32_t> ids;
  ids.reserve(parts.size());
  std::size_t rows = 0, cols = 0;
  for (const Var& p : parts) {
    Tape::check_same_tape(parts.front(), p);
    ids.push_back(p.id());
    if (axis == 0) {
      if (rows > 0 && p.cols() != cols) throw ContractViolation("concat: column count mismatch");
      cols = p.cols();
      rows += p.rows();
    } else {
      if (cols > 0 && p.rows() != rows) throw ContractViolation("concat: row count mismatch");
      rows = p.rows();
      cols += p.cols();
    }
  }
  Matrix out(rows, cols);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const Matrix& m = p.value();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      double* dst = axis == 0 ? out.data() + (offset + r) * cols : out.data() + r * cols + offset;
      std::copy(m.row(r).begin(), m.row(r).end(), dst);
    }
    offset += axis == 0 ? m.rows() : m.cols();
  }
  Var v = tape.push(Op::concat, std::move(ids), std::move(out));
  tape.node(v).r0 = static_cast<std::size_t>(axis);
  return v;
}

Var cosine_rows(Var anchors, Var v) {
  Tape::check_same_tape(anchors, v);
  const Matrix& a = anchors.value();
  const Matrix& x = v.value();
  if (x.rows() != 1 || x.cols() != a.cols()) {
    throw ContractViolation("cosine_rows: vector of length " + std::to_string(x.cols()) +
                            " against anchors of dimension " + std::to_string(a.cols()));
  }
  const auto& k = simd::kernels();
  Matrix norms(a.rows() + 1, 1);
  const double nv = std::sqrt(k.dot(x.data(), x.data(), x.cols()));
  norms[a.rows()] = nv;
  if (nv <= kEps) warn("cosine_rows: zero-norm query");
  Matrix out(1, a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ai = a.data() + i * a.cols();
    const double na = std::sqrt(k.dot(ai, ai, a.cols()));
    norms[i] = na;
    if (na <= kEps) warn("cosine_rows: zero-norm anchor row");
    const double c = k.dot(ai, x.data(), a.cols()) / (std::max(na, kEps) * std::max(nv, kEps));
    out[i] = std::clamp(c, -1.0, 1.0);
  }
  Var r = anchors.tape().push(Op::cosine_rows, {anchors.id(), v.id()}, std::move(out));
  anchors.tape().node(r).aux = std::move(norms);
  return r;
}

Var log(Var a) {
  Matrix out = a.value();
  for (double& v : out.values()) v = std::log(std::max(v, kEps));
  return a.tape().push(Op::log, {a.id()}, std::move(out));
}

Var sum(Var a) {
  const Matrix& x = a.value();
  Matrix out(1, 1, simd::kernels().sum(x.data(), x.size()));
  return a.tape().push(Op::sum, {a.id()}, std::move(out));
}

Var slice(Var a, std::size_t r0, std::size_t rows, std::size_t c0, std::size_t cols) {
  const Matrix& x = a.value();
  if (r0 + rows > x.rows() || c0 + cols > x.cols()) throw ContractViolation("slice: out of range");
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = x.data() + (r0 + r) * x.cols() + c0;
    std::copy(src, src + cols, out.data() + r * cols);
  }
  Var v = a.tape().push(Op::slice, {a.id()}, std::move(out));
  a.tape().node(v).r0 = r0;
  a.tape().node(v).c0 = c0;
  return v;
}

}  // namespace lava::ad
