// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lava/matrix.hpp"
#include "lava/tape.hpp"

namespace lava {

struct BackboneConfig {
  std::size_t depth = 6;
  std::size_t hidden_dim = 64;
  std::size_t heads = 4;
  double mlp_ratio = 4.0;
  std::size_t patch_count = 16;
  std::uint64_t seed = 0;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  std::size_t mlp_dim() const;
};

/// Learnable prompt tokens P_(t): N_p x D.
struct PromptTokens {
  Matrix tokens;
  bool frozen = false;
  std::size_t length() const noexcept { return tokens.rows(); }
};

/// Small pre-norm transformer encoder with frozen, seed-derived weights.
///
/// Input sequences are [class token, prompt tokens, patch tokens]. Sinusoidal
/// positional encodings are added to patch tokens only. Every exposed feature
/// is the class-token row of the residual stream after some layer.
class Backbone {
 public:
  explicit Backbone(BackboneConfig config);

  const BackboneConfig& config() const noexcept { return config_; }
  std::size_t dim() const noexcept { return config_.hidden_dim; }
  std::size_t depth() const noexcept { return config_.depth; }
  const Matrix& class_token() const noexcept { return cls_; }

  /// Patch tokens plus positional encodings. With `bypass_stem` the tokens
  /// are used as given (pre-extracted features).
  Matrix embed_patches(const Matrix& patches, bool bypass_stem = false) const;

  /// [x_cls; prompt; x_emb]. An empty prompt (0 rows) is allowed.
  Matrix build_prompted_sequence(const Matrix& x_emb, const Matrix& prompt) const;

  /// Records the encoder on `tape`. Returns the final class-token state
  /// (1 x D); when `taps` is non-empty, the class-token state after each
  /// listed layer (1-based) is appended to `tap_out` in the order given.
  ad::Var forward(ad::Tape& tape, ad::Var sequence, std::span<const std::size_t> taps = {},
                  std::vector<ad::Var>* tap_out = nullptr) const;

  /// g = final class-token state for a prompted sequence.
  Matrix encode(const Matrix& sequence) const;

  /// f^(l) for each l in `layers` (1-based, any order; results follow `layers`).
  std::vector<Matrix> encode_with_taps(const Matrix& sequence, std::span<const std::size_t> layers) const;

  /// Raw little-endian dump of every frozen weight, for byte comparisons.
  std::string serialize_weights() const;
  std::size_t parameter_count() const;

 private:
  struct Layer {
    Matrix w_qkv;  // D x 3D
    Matrix w_out;  // D x D
    Matrix w_up;   // D x M
    Matrix b_up;   // 1 x M
    Matrix w_down; // M x D
    Matrix b_down; // 1 x D
  };

  ad::Var block(ad::Tape& tape, ad::Var x, const Layer& layer, std::size_t index) const;
  std::vector<ad::Var> run(ad::Tape& tape, ad::Var sequence, std::size_t layers) const;
  void check_layers(std::span<const std::size_t> layers) const;

  BackboneConfig config_;
  Matrix cls_;
  std::vector<Layer> layers_;
};

/// Row permutation of the patch tokens drawn from `seed`.
Matrix patch_shuffle(const Matrix& patches, std::uint64_t seed);

/// Sinusoidal positional table, rows x dim.
Matrix sinusoidal_positions(std::size_t rows, std::size_t dim);

}  // namespace lava
