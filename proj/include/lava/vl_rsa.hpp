// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "lava/matrix.hpp"
#include "lava/numerics.hpp"
#include "lava/tape.hpp"
#include "lava/text_anchor.hpp"

namespace lava {

/// Form of the structural loss. kl compares temperature-softmaxed encodings;
/// l1 / l2 compare the raw encodings; none disables the term.
enum class StructVariant { kl, l1, l2, none };

std::string_view to_string(StructVariant v);
StructVariant parse_struct_variant(std::string_view s);

struct LossConfig {
  double tau = 0.07;
  double lambda = 0.2;
  StructVariant variant = StructVariant::kl;

  /// Throws ConfigError; warns when a non-default tau is paired with a
  /// variant that ignores it.
  void validate() const;
};

/// Learnable per-domain visual anchors A^Vis_(t): N_c x D_v.
struct VisualAnchorSet {
  Matrix anchors;
  std::size_t domain = 0;
  bool frozen = false;
};

/// Seeded N(0, 1/D) rows, shared by visual and prototype anchors.
Matrix init_anchor_matrix(std::size_t classes, std::size_t dim, Rng& rng);

RelativeEncoding visual_relative_encoding(std::span<const double> g, const VisualAnchorSet& anchors);

/// Scalar L_Struct between a visual encoding and a reference encoding.
double structural_loss(std::span<const double> r_g, std::span<const double> r_y, const LossConfig& cfg);

/// Differentiable L_Struct. `r_g` is a 1 x N row on the tape; `r_y` is fixed.
ad::Var structural_loss(ad::Var r_g, std::span<const double> r_y, const LossConfig& cfg);

}  // namespace lava
