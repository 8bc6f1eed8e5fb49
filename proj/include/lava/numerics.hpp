// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lava/matrix.hpp"

namespace lava {

/// Guard for norms and logarithms.
inline constexpr double kEps = 1e-12;

/// u.v / (max(|u|,eps) max(|v|,eps)), clamped to [-1, 1]. A zero-norm input
/// yields 0 and records a warning.
double cosine_similarity(std::span<const double> u, std::span<const double> v);

/// exp((x_c - max x) / tau) normalized. Throws ConfigError when tau <= 0.
std::vector<double> softmax_temp(std::span<const double> x, double tau);

/// sum_c p_c log(max(p_c,eps) / max(q_c,eps)). Both inputs must be
/// distributions (entries >= 0, sum 1 within 1e-9).
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// -log softmax(logits)[label], computed via log-sum-exp.
double cross_entropy(std::span<const double> logits, std::size_t label);

/// Scalar loss over a parameter block; used by the finite-difference oracle.
using BlockLoss = std::function<double(const Matrix&)>;

/// Central differences (L(theta + h e_k) - L(theta - h e_k)) / 2h for every
/// coordinate. A non-finite probe raises NumericError naming the coordinate.
Matrix fd_gradient(const BlockLoss& loss, const Matrix& theta, double h = 1e-5);

/// Largest elementwise |a - b| / max(|a|, |b|, floor). The floor keeps
/// entries that are zero in both from dividing noise by noise.
double max_relative_error(const Matrix& analytic, const Matrix& numeric, double floor = 1e-6);

/// splitmix64 finalizer; used to derive child seeds.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

/// Platform-independent generator: mt19937_64 stream with hand-rolled
/// uniform/normal draws so outputs do not depend on the standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  double normal();
  Matrix normal_matrix(std::size_t rows, std::size_t cols, double stddev);
  /// Fisher-Yates permutation of 0..n-1.
  std::vector<std::size_t> permutation(std::size_t n);

 private:
  std::uint64_t state_[312];
  std::size_t index_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lava
