// SPDX-License-Identifier: Apache-2.0
#include "lava/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lava/error.hpp"
#include "lava/numerics.hpp"

namespace lava {

void ModelConfig::validate() const {
  backbone.validate();
  loss.validate();
  if (!(prompt_init_std >= 0.0)) throw ConfigError("must be non-negative", "model.prompt_init_std");
}

std::size_t DomainModelState::trainable_parameters() const {
  std::size_t n = prompt.tokens.size() + visual.anchors.size() + classifier.weight.size() + classifier.bias.size();
  if (prototypes) n += prototypes->prototypes.size();
  return n;
}

std::string DomainModelState::serialize() const {
  std::string bytes;
  auto put = [&bytes](const Matrix& m) {
    bytes.append(reinterpret_cast<const char*>(m.data()), m.size() * sizeof(double));
  };
  put(prompt.tokens);
  put(visual.anchors);
  if (prototypes) put(prototypes->prototypes);
  put(classifier.weight);
  put(classifier.bias);
  bytes.push_back(frozen ? 1 : 0);
  return bytes;
}

void DomainGradients::accumulate(const DomainGradients& other) {
  add_scaled(prompt, other.prompt);
  add_scaled(visual, other.visual);
  if (!prototypes.empty()) add_scaled(prototypes, other.prototypes);
  add_scaled(weight, other.weight);
  add_scaled(bias, other.bias);
}

void DomainGradients::scale(double s) {
  for (Matrix* m : {&prompt, &visual, &prototypes, &weight, &bias})
    for (double& v : m->values()) v *= s;
}

LavaModel::LavaModel(ModelConfig config, TextAnchorSet text)
    : config_(std::move(config)), backbone_(config_.backbone), text_(std::move(text)) {
  config_.validate();
}

const DomainModelState& LavaModel::domain(std::size_t t) const {
  check_domain(t);
  return domains_[t];
}

DomainModelState& LavaModel::mutable_domain(std::size_t t) {
  check_domain(t);
  return domains_[t];
}

void LavaModel::check_domain(std::size_t t) const {
  if (t >= domains_.size()) {
    throw StateError("no parameters for domain " + std::to_string(t + 1) + " (" + std::to_string(domains_.size()) +
                     " initialized)");
  }
}

DomainModelState& LavaModel::add_domain(std::uint64_t global_seed) { return add_domain(global_seed, domains_.size()); }

DomainModelState& LavaModel::add_domain(std::uint64_t global_seed, std::size_t seed_key) {
  for (const auto& d : domains_) {
    if (!d.frozen) throw StateError("domain " + std::to_string(d.domain + 1) + " must be frozen before adding another");
  }
  const std::size_t t = domains_.size();
  const std::size_t dim = backbone_.dim();
  const std::size_t nc = classes();
  DomainModelState s;
  s.domain = t;
  s.init_seed = mix_seed(global_seed, seed_key);
  Rng rng(s.init_seed);
  s.prompt.tokens = rng.normal_matrix(config_.prompt_length, dim, config_.prompt_init_std);
  s.visual = VisualAnchorSet{init_anchor_matrix(nc, dim, rng), t, false};
  // Drawn in share mode too, so both variants see identical other blocks.
  Matrix protos = init_anchor_matrix(nc, dim, rng);
  if (!config_.share) s.prototypes = PrototypeAnchorSet{std::move(protos), t, false};
  s.classifier.weight = rng.normal_matrix(nc, dim, 1.0 / std::sqrt(static_cast<double>(dim)));
  s.classifier.bias = Matrix(1, nc);
  domains_.push_back(std::move(s));
  return domains_.back();
}

void LavaModel::push_domain(DomainModelState state) {
  if (state.domain != domains_.size()) throw StateError("checkpoint domains out of order");
  if (state.visual.anchors.rows() != classes() || state.visual.anchors.cols() != backbone_.dim()) {
    throw FormatError("domain " + std::to_string(state.domain + 1) + ": visual anchors have the wrong shape");
  }
  if (config_.share == state.prototypes.has_value()) {
    throw FormatError("domain " + std::to_string(state.domain + 1) + ": prototype pool does not match share mode");
  }
  domains_.push_back(std::move(state));
}

Matrix LavaModel::prompted_sequence(const Sample& sample, std::size_t t, bool bypass_stem) const {
  check_domain(t);
  return backbone_.build_prompted_sequence(backbone_.embed_patches(sample.tokens, bypass_stem),
                                           domains_[t].prompt.tokens);
}

struct LavaModel::Recorded {
  ad::Var g;
  ad::Var logits;
  ad::Var prompt, visual, prototypes, weight, bias;
  bool has_prototypes = false;
};

LavaModel::Recorded LavaModel::record(ad::Tape& tape, const Sample& sample, std::size_t t, bool bypass_stem,
                                      bool trainable) const {
  check_domain(t);
  const DomainModelState& cur = domains_[t];
  auto param = [&](const Matrix& m) { return trainable ? tape.leaf_ref(m) : tape.constant_ref(m); };

  Recorded rec;
  rec.prompt = param(cur.prompt.tokens);
  const Matrix x_emb = backbone_.embed_patches(sample.tokens, bypass_stem);
  std::vector<ad::Var> seq_parts{tape.constant_ref(backbone_.class_token())};
  if (cur.prompt.tokens.rows() > 0) seq_parts.push_back(rec.prompt);
  seq_parts.push_back(tape.constant(x_emb));
  rec.g = backbone_.forward(tape, ad::concat_rows(seq_parts));

  rec.visual = param(cur.visual.anchors);
  rec.weight = param(cur.classifier.weight);
  rec.bias = param(cur.classifier.bias);
  if (cur.prototypes) {
    rec.prototypes = param(cur.prototypes->prototypes);
    rec.has_prototypes = true;
  }

  ad::Var f = rec.g;
  if (config_.aggregation) {
    std::vector<ad::Var> keys, values;
    for (std::size_t k = 0; k < t; ++k) {
      const DomainModelState& prev = domains_[k];
      if (!prev.frozen) throw StateError("domain " + std::to_string(k + 1) + " is not frozen");
      keys.push_back(tape.constant_ref(prev.visual.anchors));
      if (!config_.share) {
        if (!prev.prototypes) throw StateError("missing prototype pool for domain " + std::to_string(k + 1));
        values.push_back(tape.constant_ref(prev.prototypes->prototypes));
      }
    }
    keys.push_back(rec.visual);
    if (!config_.share) {
      if (!rec.has_prototypes) throw StateError("missing prototype pool for domain " + std::to_string(t + 1));
      values.push_back(rec.prototypes);
    }
    ad::Var key_set = keys.size() == 1 ? keys.front() : ad::concat_rows(keys);
    ad::Var value_set = config_.share ? key_set : (values.size() == 1 ? values.front() : ad::concat_rows(values));
    ad::Var alpha = global_attention(rec.g, key_set, config_.loss.tau);
    f = aggregate(alpha, value_set, rec.g);
  }
  rec.logits = classifier_logits(f, rec.weight, rec.bias);
  return rec;
}

TrainForward LavaModel::forward_train(const Sample& sample, std::size_t t, bool bypass_stem,
                                      DomainGradients* grads) const {
  check_domain(t);
  if (domains_[t].frozen) throw StateError("domain " + std::to_string(t + 1) + " is frozen");
  if (sample.label >= classes()) throw ContractViolation("sample label outside the class map");
  ad::Tape tape;
  Recorded rec = record(tape, sample, t, bypass_stem, true);
  ad::Var ce = cross_entropy(rec.logits, sample.label);
  ad::Var total = ce;
  ad::Var l_struct = tape.constant(Matrix(1, 1));
  const LossConfig& loss = config_.loss;
  if (loss.variant != StructVariant::none) {
    ad::Var r_g = ad::cosine_rows(rec.visual, rec.g);
    l_struct = structural_loss(r_g, reference_encoding(sample.label, text_), loss);
    if (loss.lambda != 0.0) total = ad::add(ce, ad::scale(l_struct, loss.lambda));
  }

  TrainForward out;
  out.logits.assign(rec.logits.value().values().begin(), rec.logits.value().values().end());
  out.ce = ce.value()[0];
  out.l_struct = l_struct.value()[0];
  out.total = total.value()[0];
  if (grads != nullptr) {
    tape.backward(total);
    add_scaled(grads->prompt, tape.grad(rec.prompt));
    add_scaled(grads->visual, tape.grad(rec.visual));
    if (rec.has_prototypes) add_scaled(grads->prototypes, tape.grad(rec.prototypes));
    add_scaled(grads->weight, tape.grad(rec.weight));
    add_scaled(grads->bias, tape.grad(rec.bias));
  }
  return out;
}

Matrix LavaModel::encode(const Sample& sample, std::size_t s, bool bypass_stem) const {
  return backbone_.encode(prompted_sequence(sample, s, bypass_stem));
}

std::vector<double> LavaModel::predict_logits(const Sample& sample, std::size_t s, bool bypass_stem) const {
  ad::Tape tape;
  Recorded rec = record(tape, sample, s, bypass_stem, false);
  const Matrix& l = rec.logits.value();
  return {l.values().begin(), l.values().end()};
}

std::size_t LavaModel::predict(const Sample& sample, std::size_t s, bool bypass_stem) const {
  const auto logits = predict_logits(sample, s, bypass_stem);
  // First maximum wins, so ties resolve to the lowest class index.
  return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

std::size_t LavaModel::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const auto& d : domains_) n += d.trainable_parameters();
  return n;
}

DomainGradients LavaModel::zero_gradients(std::size_t t) const {
  const DomainModelState& d = domain(t);
  DomainGradients g;
  g.prompt = Matrix(d.prompt.tokens.rows(), d.prompt.tokens.cols());
  g.visual = Matrix(d.visual.anchors.rows(), d.visual.anchors.cols());
  if (d.prototypes) g.prototypes = Matrix(d.prototypes->prototypes.rows(), d.prototypes->prototypes.cols());
  g.weight = Matrix(d.classifier.weight.rows(), d.classifier.weight.cols());
  g.bias = Matrix(d.classifier.bias.rows(), d.classifier.bias.cols());
  return g;
}

std::size_t expected_parameter_count(const ModelConfig& config, std::size_t classes, std::size_t domains) {
  const std::size_t d = config.backbone.hidden_dim;
  std::size_t per = config.prompt_length * d + classes * d + classes * d + classes;
  if (!config.share) per += classes * d;
  return per * domains;
}

}  // namespace lava
