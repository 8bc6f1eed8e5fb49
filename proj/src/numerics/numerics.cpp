// SPDX-License-Identifier: Apache-2.0
#include "lava/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "lava/error.hpp"
#include "lava/simd.hpp"

namespace lava {

namespace {

thread_local std::vector<std::string> t_warnings;

void check_distribution(std::span<const double> p, const char* name) {
  double total = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ContractViolation(std::string("kl_divergence: negative entry in ") + name);
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw ContractViolation(std::string("kl_divergence: ") + name + " sums to " +
                            std::to_string(total));
  }
}

}  // namespace

void warn(std::string message) { t_warnings.push_back(std::move(message)); }

std::vector<std::string> take_warnings() {
  std::vector<std::string> out;
  out.swap(t_warnings);
  return out;
}

std::size_t warning_count() { return t_warnings.size(); }

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ContractViolation("cosine_similarity: length " + std::to_string(u.size()) + " vs " +
                            std::to_string(v.size()));
  }
  const auto& k = simd::kernels();
  const double nu = std::sqrt(k.dot(u.data(), u.data(), u.size()));
  const double nv = std::sqrt(k.dot(v.data(), v.data(), v.size()));
  if (nu <= kEps || nv <= kEps) warn("cosine_similarity: degenerate zero-norm input");
  const double c = k.dot(u.data(), v.data(), u.size()) / (std::max(nu, kEps) * std::max(nv, kEps));
  return std::clamp(c, -1.0, 1.0);
}

std::vector<double> softmax_temp(std::span<const double> x, double tau) {
  if (!(tau > 0.0)) throw ConfigError("softmax temperature must be positive", "tau");
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  const double hi = *std::max_element(x.begin(), x.end());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp((x[i] - hi) / tau);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ContractViolation("kl_divergence: length " + std::to_string(p.size()) + " vs " +
                            std::to_string(q.size()));
  }
  check_distribution(p, "p");
  check_distribution(q, "q");
  double acc = 0.0;
  for (std::size_t c = 0; c < p.size(); ++c) {
    if (p[c] == 0.0) continue;
    acc += p[c] * std::log(std::max(p[c], kEps) / std::max(q[c], kEps));
  }
  return acc;
}

double cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) {
    throw ContractViolation("cross_entropy: label " + std::to_string(label) + " out of range");
  }
  const double hi = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double v : logits) total += std::exp(v - hi);
  return -(logits[label] - hi - std::log(total));
}

Matrix fd_gradient(const BlockLoss& loss, const Matrix& theta, double h) {
  Matrix grad(theta.rows(), theta.cols());
  Matrix probe = theta;
  for (std::size_t k = 0; k < theta.size(); ++k) {
    const double orig = probe[k];
    probe[k] = orig + h;
    const double up = loss(probe);
    probe[k] = orig - h;
    const double down = loss(probe);
    probe[k] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("fd_gradient: non-finite loss at coordinate " + std::to_string(k));
    }
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

double max_relative_error(const Matrix& analytic, const Matrix& numeric, double floor) {
  if (!same_shape(analytic, numeric)) throw ContractViolation("max_relative_error: shape mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    const double a = analytic[k];
    const double n = numeric[k];
    const double denom = std::max({std::abs(a), std::abs(n), floor});
    worst = std::max(worst, std::abs(a - n) / denom);
  }
  return worst;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// mt19937_64 (Matsumoto & Nishimura reference parameters).
Rng::Rng(std::uint64_t seed) : index_(312) {
  state_[0] = seed;
  for (std::size_t i = 1; i < 312; ++i) {
    state_[i] = 6364136223846793005ULL * (state_[i - 1] ^ (state_[i - 1] >> 62)) + i;
  }
}

std::uint64_t Rng::next_u64() {
  constexpr std::uint64_t kUpper = 0xFFFFFFFF80000000ULL;
  constexpr std::uint64_t kLower = 0x7FFFFFFFULL;
  constexpr std::uint64_t kMatrixA = 0xB5026F5AA96619E9ULL;
  if (index_ >= 312) {
    for (std::size_t i = 0; i < 312; ++i) {
      const std::uint64_t x = (state_[i] & kUpper) | (state_[(i + 1) % 312] & kLower);
      std::uint64_t xa = x >> 1;
      if (x & 1ULL) xa ^= kMatrixA;
      state_[i] = state_[(i + 156) % 312] ^ xa;
    }
    index_ = 0;
  }
  std::uint64_t y = state_[index_++];
  y ^= (y >> 29) & 0x5555555555555555ULL;
  y ^= (y << 17) & 0x71D67FFFEDA60000ULL;
  y ^= (y << 37) & 0xFFF7EEE000000000ULL;
  y ^= y >> 43;
  return y;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw ContractViolation("Rng::below: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Matrix Rng::normal_matrix(std::size_t rows, std::size_t cols, double stddev) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = stddev * normal();
  return m;
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[below(i)]);
  return p;
}

}  // namespace lava
