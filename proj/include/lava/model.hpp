// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "lava/backbone.hpp"
#include "lava/ca_cdfa.hpp"
#include "lava/datagen.hpp"
#include "lava/text_anchor.hpp"
#include "lava/vl_rsa.hpp"

namespace lava {

struct ModelConfig {
  BackboneConfig backbone;
  std::size_t prompt_length = 16;
  LossConfig loss;
  /// Reuse the visual anchor pool as attention values (no prototype pools).
  bool share = false;
  /// Cross-domain anchor attention; when off the classifier sees g directly.
  bool aggregation = true;
  double prompt_init_std = 0.02;

  void validate() const;
};

/// Adam first/second moments for one parameter block.
struct AdamMoments {
  Matrix m;
  Matrix v;
};

/// Optimizer state for the domain currently being trained.
struct DomainOptimizerState {
  std::vector<AdamMoments> blocks;  // prompt, visual, prototypes (if any), weight, bias
  std::size_t step = 0;
};

/// Everything learnable for one domain.
struct DomainModelState {
  std::size_t domain = 0;
  std::uint64_t init_seed = 0;
  PromptTokens prompt;
  VisualAnchorSet visual;
  std::optional<PrototypeAnchorSet> prototypes;  // absent in share mode
  DomainClassifier classifier;
  bool frozen = false;
  bool trained = false;
  std::optional<DomainOptimizerState> optimizer;

  std::size_t trainable_parameters() const;
  /// Concatenated raw bytes of every learnable block (for stability checks).
  std::string serialize() const;
};

/// Gradient blocks for the trainable parameters of one domain.
struct DomainGradients {
  Matrix prompt;
  Matrix visual;
  Matrix prototypes;  // empty in share mode
  Matrix weight;
  Matrix bias;

  void accumulate(const DomainGradients& other);
  void scale(double s);
};

struct TrainForward {
  std::vector<double> logits;
  double ce = 0.0;
  double l_struct = 0.0;
  double total = 0.0;
};

/// The frozen backbone, the frozen text anchors, and the per-domain pools.
class LavaModel {
 public:
  LavaModel(ModelConfig config, TextAnchorSet text);

  const ModelConfig& config() const noexcept { return config_; }
  const Backbone& backbone() const noexcept { return backbone_; }
  const TextAnchorSet& text() const noexcept { return text_; }
  std::size_t classes() const noexcept { return text_.count(); }
  std::size_t domain_count() const noexcept { return domains_.size(); }
  const DomainModelState& domain(std::size_t t) const;
  DomainModelState& mutable_domain(std::size_t t);

  /// Appends freshly initialized parameters for the next domain, seeded by
  /// mix_seed(global_seed, t). Every earlier domain must be frozen.
  DomainModelState& add_domain(std::uint64_t global_seed);
  /// Seeds the new domain from (global_seed, seed_key) so reordered streams reuse initializations.
  DomainModelState& add_domain(std::uint64_t global_seed, std::size_t seed_key);
  /// Restores a serialized domain (checkpoint loading).
  void push_domain(DomainModelState state);

  /// Prompted sequence [cls; P_(t); x_emb] for a sample.
  Matrix prompted_sequence(const Sample& sample, std::size_t t, bool bypass_stem) const;

  /// Training objective for one sample of domain t; gradients w.r.t. the
  /// domain-t parameters are accumulated into `grads` when non-null.
  TrainForward forward_train(const Sample& sample, std::size_t t, bool bypass_stem,
                             DomainGradients* grads = nullptr) const;

  /// Prompt-adapted feature g for domain s.
  Matrix encode(const Sample& sample, std::size_t s, bool bypass_stem) const;
  /// Class logits using only components of domains 0..s.
  std::vector<double> predict_logits(const Sample& sample, std::size_t s, bool bypass_stem) const;
  std::size_t predict(const Sample& sample, std::size_t s, bool bypass_stem) const;

  std::size_t trainable_parameter_count() const;
  DomainGradients zero_gradients(std::size_t t) const;

 private:
  struct Recorded;
  Recorded record(ad::Tape& tape, const Sample& sample, std::size_t t, bool bypass_stem, bool trainable) const;
  void check_domain(std::size_t t) const;

  ModelConfig config_;
  Backbone backbone_;
  TextAnchorSet text_;
  std::vector<DomainModelState> domains_;
};

/// Trainable parameters a model of this configuration holds after `domains`
/// stages: per domain N_p*D + N_c*D (visual) + N_c*D (prototypes, unless
/// shared) + N_c*D + N_c (classifier).
std::size_t expected_parameter_count(const ModelConfig& config, std::size_t classes, std::size_t domains);

}  // namespace lava
