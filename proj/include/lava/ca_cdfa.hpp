// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "lava/matrix.hpp"
#include "lava/tape.hpp"
#include "lava/vl_rsa.hpp"

namespace lava {

/// Learnable per-domain class prototypes V^proto_(t): N_c x D_v.
struct PrototypeAnchorSet {
  Matrix prototypes;
  std::size_t domain = 0;
  bool frozen = false;
};

/// Linear head psi_(t): logits = f W^T + b.
struct DomainClassifier {
  Matrix weight;  // N_c x D_v
  Matrix bias;    // 1 x N_c
  bool frozen = false;

  std::vector<double> logits(std::span<const double> f) const;
};

/// Keys and values for cross-domain attention. Row block k belongs to the
/// k-th domain in stream order.
struct GlobalKeyValue {
  Matrix keys;
  Matrix values;
  std::size_t domains = 0;
  std::size_t classes = 0;
};

/// Concatenates per-domain blocks; under share mode values alias the keys.
GlobalKeyValue build_global_key_value(std::span<const Matrix* const> visual,
                                      std::span<const Matrix* const> prototypes, bool share);

/// softmax_tau(rel(g, keys)); sums to one.
std::vector<double> global_attention(std::span<const double> g, const Matrix& keys, double tau);

/// alpha * V + g.
std::vector<double> aggregate(std::span<const double> alpha, const Matrix& values, std::span<const double> g);

/// CE(softmax(logits), label) + lambda * l_struct.
double combined_loss(std::span<const double> logits, std::size_t label, double l_struct, double lambda);

// Tape forms of the pieces above, composed by forward_train.
ad::Var global_attention(ad::Var g, ad::Var keys, double tau);
ad::Var aggregate(ad::Var alpha, ad::Var values, ad::Var g);
ad::Var classifier_logits(ad::Var f, ad::Var weight, ad::Var bias);
/// -log softmax(logits)[label] on the tape.
ad::Var cross_entropy(ad::Var logits, std::size_t label);

}  // namespace lava
