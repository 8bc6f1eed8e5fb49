// SPDX-License-Identifier: Apache-2.0
#include "lava/vl_rsa.hpp"

#include <cmath>
#include <string>

#include "lava/error.hpp"

namespace lava {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw ContractViolation("structural_loss: encoding lengths " + std::to_string(a) + " and " +
                            std::to_string(b) + " differ");
  }
}

}  // namespace

std::string_view to_string(StructVariant v) {
  switch (v) {
    case StructVariant::kl: return "kl";
    case StructVariant::l1: return "l1";
    case StructVariant::l2: return "l2";
    case StructVariant::none: return "none";
  }
  return "?";
}

StructVariant parse_struct_variant(std::string_view s) {
  if (s == "kl" || s == "KL") return StructVariant::kl;
  if (s == "l1" || s == "L1") return StructVariant::l1;
  if (s == "l2" || s == "L2") return StructVariant::l2;
  if (s == "none") return StructVariant::none;
  throw ConfigError("unknown variant '" + std::string(s) + "' (expected kl, l1, l2 or none)", "loss.variant");
}

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("must be positive", "loss.tau");
  if (!(lambda >= 0.0)) throw ConfigError("must be non-negative", "loss.lambda");
  if ((variant == StructVariant::l1 || variant == StructVariant::l2) && tau != 0.07) {
    warn("loss.tau only shapes the attention softmax under the " + std::string(to_string(variant)) +
         " variant; the structural term ignores it");
  }
}

Matrix init_anchor_matrix(std::size_t classes, std::size_t dim, Rng& rng) {
  return rng.normal_matrix(classes, dim, 1.0 / std::sqrt(static_cast<double>(dim)));
}

RelativeEncoding visual_relative_encoding(std::span<const double> g, const VisualAnchorSet& anchors) {
  return relative_encoding(g, anchors.anchors, AnchorTag::visual);
}

double structural_loss(std::span<const double> r_g, std::span<const double> r_y, const LossConfig& cfg) {
  check_lengths(r_g.size(), r_y.size());
  const double n = static_cast<double>(r_g.size());
  switch (cfg.variant) {
    case StructVariant::none:
      return 0.0;
    case StructVariant::l1: {
      double acc = 0.0;
      for (std::size_t c = 0; c < r_g.size(); ++c) acc += std::abs(r_g[c] - r_y[c]);
      return acc / n;
    }
    case StructVariant::l2: {
      double acc = 0.0;
      for (std::size_t c = 0; c < r_g.size(); ++c) acc += (r_g[c] - r_y[c]) * (r_g[c] - r_y[c]);
      return acc / n;
    }
    case StructVariant::kl:
      break;
  }
  return kl_divergence(softmax_temp(r_g, cfg.tau), softmax_temp(r_y, cfg.tau));
}

ad::Var structural_loss(ad::Var r_g, std::span<const double> r_y, const LossConfig& cfg) {
  check_lengths(r_g.cols(), r_y.size());
  ad::Tape& tape = r_g.tape();
  const double n = static_cast<double>(r_y.size());
  switch (cfg.variant) {
    case StructVariant::none:
      return tape.constant(Matrix(1, 1));
    case StructVariant::l1: {
      ad::Var diff = ad::sub(r_g, tape.constant(Matrix::row_vector(r_y)));
      // |d| = d * sign(d); sign is piecewise constant so it enters as data.
      Matrix sign(1, r_y.size());
      for (std::size_t c = 0; c < r_y.size(); ++c) {
        const double d = diff.value()[c];
        sign[c] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      }
      return ad::scale(ad::matmul(diff, tape.constant(std::move(sign)), true), 1.0 / n);
    }
    case StructVariant::l2: {
      ad::Var diff = ad::sub(r_g, tape.constant(Matrix::row_vector(r_y)));
      return ad::scale(ad::matmul(diff, diff, true), 1.0 / n);
    }
    case StructVariant::kl:
      break;
  }
  const auto p_y = softmax_temp(r_y, cfg.tau);
  Matrix log_p_y(1, p_y.size());
  for (std::size_t c = 0; c < p_y.size(); ++c) log_p_y[c] = std::log(std::max(p_y[c], kEps));
  ad::Var p_g = ad::softmax_rows(r_g, cfg.tau);
  ad::Var log_ratio = ad::sub(ad::log(p_g), tape.constant(std::move(log_p_y)));
  return ad::matmul(p_g, log_ratio, true);
}

}  // namespace lava
