// SPDX-License-Identifier: Apache-2.0
#include "lava/ca_cdfa.hpp"

#include <string>

#include "lava/error.hpp"
#include "lava/numerics.hpp"
#include "lava/simd.hpp"

namespace lava {

std::vector<double> DomainClassifier::logits(std::span<const double> f) const {
  if (f.size() != weight.cols()) throw ContractViolation("classifier: feature width mismatch");
  const auto& k = simd::kernels();
  std::vector<double> out(weight.rows());
  for (std::size_t c = 0; c < weight.rows(); ++c) out[c] = k.dot(weight.row(c).data(), f.data(), f.size()) + bias[c];
  return out;
}

GlobalKeyValue build_global_key_value(std::span<const Matrix* const> visual,
                                      std::span<const Matrix* const> prototypes, bool share) {
  if (visual.empty()) throw ContractViolation("global key/value: no domains");
  GlobalKeyValue kv;
  kv.domains = visual.size();
  kv.classes = visual.front()->rows();
  for (const Matrix* m : visual) {
    if (m->rows() != kv.classes) throw ContractViolation("global key/value: class count differs across domains");
  }
  kv.keys = vstack(visual);
  if (share) {
    kv.values = kv.keys;
  } else {
    if (prototypes.size() != visual.size()) throw StateError("global key/value: missing prototype pool");
    kv.values = vstack(prototypes);
  }
  if (!same_shape(kv.keys, kv.values)) throw ContractViolation("global key/value: key/value shapes differ");
  return kv;
}

std::vector<double> global_attention(std::span<const double> g, const Matrix& keys, double tau) {
  if (keys.rows() == 0) throw ContractViolation("global_attention: empty key set");
  return softmax_temp(relative_encoding(g, keys, AnchorTag::global_keys).values, tau);
}

std::vector<double> aggregate(std::span<const double> alpha, const Matrix& values, std::span<const double> g) {
  if (alpha.size() != values.rows() || g.size() != values.cols()) {
    throw ContractViolation("aggregate: attention length " + std::to_string(alpha.size()) + " vs " +
                            std::to_string(values.rows()) + " value rows");
  }
  std::vector<double> f(g.begin(), g.end());
  const auto& k = simd::kernels();
  for (std::size_t r = 0; r < values.rows(); ++r) k.axpy(alpha[r], values.row(r).data(), f.data(), f.size());
  return f;
}

double combined_loss(std::span<const double> logits, std::size_t label, double l_struct, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("must be non-negative", "loss.lambda");
  return cross_entropy(logits, label) + lambda * l_struct;
}

ad::Var global_attention(ad::Var g, ad::Var keys, double tau) {
  if (keys.rows() == 0) throw ContractViolation("global_attention: empty key set");
  return ad::softmax_rows(ad::cosine_rows(keys, g), tau);
}

ad::Var aggregate(ad::Var alpha, ad::Var values, ad::Var g) {
  if (alpha.cols() != values.rows()) throw ContractViolation("aggregate: attention/value shape mismatch");
  return ad::add(ad::matmul(alpha, values), g);
}

ad::Var classifier_logits(ad::Var f, ad::Var weight, ad::Var bias) {
  return ad::add(ad::matmul(f, weight, true), bias);
}

ad::Var cross_entropy(ad::Var logits, std::size_t label) {
  if (label >= logits.cols()) {
    throw ContractViolation("cross_entropy: label " + std::to_string(label) + " out of range");
  }
  ad::Var log_p = ad::log(ad::softmax_rows(logits, 1.0));
  return ad::scale(ad::slice(log_p, 0, 1, label, 1), -1.0);
}

}  // namespace lava
