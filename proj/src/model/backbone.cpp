// SPDX-License-Identifier: Apache-2.0
#include "lava/backbone.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "lava/error.hpp"
#include "lava/numerics.hpp"

namespace lava {

void BackboneConfig::validate() const {
  if (depth < 2) throw ConfigError("must be at least 2", "backbone.depth");
  if (hidden_dim == 0) throw ConfigError("must be positive", "backbone.hidden_dim");
  if (heads == 0 || hidden_dim % heads != 0) {
    throw ConfigError("hidden_dim must be divisible by heads", "backbone.heads");
  }
  if (!(mlp_ratio > 0.0)) throw ConfigError("must be positive", "backbone.mlp_ratio");
  if (patch_count == 0) throw ConfigError("must be positive", "backbone.patch_count");
}

std::size_t BackboneConfig::mlp_dim() const {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(mlp_ratio * static_cast<double>(hidden_dim))));
}

Backbone::Backbone(BackboneConfig config) : config_(config) {
  config_.validate();
  const std::size_t d = config_.hidden_dim;
  const std::size_t m = config_.mlp_dim();
  Rng rng(mix_seed(config_.seed, 0xBAC4B0E));
  cls_ = rng.normal_matrix(1, d, 0.02);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sm = 1.0 / std::sqrt(static_cast<double>(m));
  layers_.reserve(config_.depth);
  for (std::size_t l = 0; l < config_.depth; ++l) {
    Layer layer;
    layer.w_qkv = rng.normal_matrix(d, 3 * d, sd);
    layer.w_out = rng.normal_matrix(d, d, sd);
    layer.w_up = rng.normal_matrix(d, m, sd);
    layer.b_up = rng.normal_matrix(1, m, 0.02);
    layer.w_down = rng.normal_matrix(m, d, sm);
    layer.b_down = rng.normal_matrix(1, d, 0.02);
    layers_.push_back(std::move(layer));
  }
}

Matrix sinusoidal_positions(std::size_t rows, std::size_t dim) {
  Matrix pe(rows, dim);
  for (std::size_t p = 0; p < rows; ++p) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(p) * freq;
      pe(p, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

Matrix Backbone::embed_patches(const Matrix& patches, bool bypass_stem) const {
  if (patches.cols() != dim()) {
    throw ContractViolation("embed_patches: token width " + std::to_string(patches.cols()) +
                            " != hidden dim " + std::to_string(dim()));
  }
  if (bypass_stem) return patches;
  Matrix out = patches;
  add_scaled(out, sinusoidal_positions(patches.rows(), dim()));
  return out;
}

Matrix Backbone::build_prompted_sequence(const Matrix& x_emb, const Matrix& prompt) const {
  if (x_emb.cols() != dim()) throw ContractViolation("build_prompted_sequence: patch width != D");
  if (!prompt.empty() && prompt.cols() != dim()) {
    throw ContractViolation("build_prompted_sequence: prompt width != D");
  }
  if (prompt.empty()) return vstack({&cls_, &x_emb});
  return vstack({&cls_, &prompt, &x_emb});
}

ad::Var Backbone::block(ad::Tape& tape, ad::Var x, const Layer& layer, std::size_t index) const {
  const std::size_t d = dim();
  const std::size_t heads = config_.heads;
  const std::size_t dh = d / heads;
  const std::size_t n = x.rows();
  const double temperature = std::sqrt(static_cast<double>(dh));

  ad::Var h = ad::layer_norm_rows(x);
  ad::Var qkv = ad::matmul(h, tape.constant_ref(layer.w_qkv));
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    ad::Var q = ad::slice(qkv, 0, n, i * dh, dh);
    ad::Var k = ad::slice(qkv, 0, n, d + i * dh, dh);
    ad::Var v = ad::slice(qkv, 0, n, 2 * d + i * dh, dh);
    ad::Var att = ad::softmax_rows(ad::matmul(q, k, true), temperature);
    outs.push_back(ad::matmul(att, v));
  }
  ad::Var mixed = heads == 1 ? outs.front() : ad::concat_cols(outs);
  ad::Var x1 = ad::add(x, ad::matmul(mixed, tape.constant_ref(layer.w_out)));

  ad::Var up = ad::add(ad::matmul(ad::layer_norm_rows(x1), tape.constant_ref(layer.w_up)),
                       tape.constant_ref(layer.b_up));
  ad::Var down = ad::add(ad::matmul(ad::gelu(up), tape.constant_ref(layer.w_down)),
                         tape.constant_ref(layer.b_down));
  ad::Var out = ad::add(x1, down);
  if (!all_finite(out.value())) {
    throw NumericError("backbone: non-finite activation at layer " + std::to_string(index + 1));
  }
  return out;
}

void Backbone::check_layers(std::span<const std::size_t> layers) const {
  for (std::size_t l : layers) {
    if (l < 1 || l > depth()) {
      throw ConfigError("layer index " + std::to_string(l) + " outside [1, " + std::to_string(depth()) + "]",
                        "layers");
    }
  }
}

std::vector<ad::Var> Backbone::run(ad::Tape& tape, ad::Var sequence, std::size_t layers) const {
  if (sequence.cols() != dim()) throw ContractViolation("backbone: sequence width != D");
  std::vector<ad::Var> states;
  states.reserve(layers);
  ad::Var x = sequence;
  for (std::size_t l = 0; l < layers; ++l) {
    x = block(tape, x, layers_[l], l);
    states.push_back(x);
  }
  return states;
}

ad::Var Backbone::forward(ad::Tape& tape, ad::Var sequence, std::span<const std::size_t> taps,
                          std::vector<ad::Var>* tap_out) const {
  check_layers(taps);
  const auto states = run(tape, sequence, depth());
  if (tap_out != nullptr) {
    for (std::size_t l : taps) tap_out->push_back(ad::row_of(states[l - 1], 0));
  }
  return ad::row_of(states.back(), 0);
}

Matrix Backbone::encode(const Matrix& sequence) const {
  ad::Tape tape;
  return forward(tape, tape.constant_ref(sequence)).value();
}

std::vector<Matrix> Backbone::encode_with_taps(const Matrix& sequence,
                                               std::span<const std::size_t> layers) const {
  check_layers(layers);
  if (layers.empty()) return {};
  ad::Tape tape;
  // Layers past the deepest tap cannot influence the requested features.
  const auto states = run(tape, tape.constant_ref(sequence), *std::max_element(layers.begin(), layers.end()));
  std::vector<Matrix> out;
  out.reserve(layers.size());
  for (std::size_t l : layers) out.push_back(states[l - 1].value().row_copy(0));
  return out;
}

std::string Backbone::serialize_weights() const {
  std::string bytes;
  auto put = [&bytes](const Matrix& m) {
    const auto* p = reinterpret_cast<const char*>(m.data());
    bytes.append(p, m.size() * sizeof(double));
  };
  put(cls_);
  for (const Layer& l : layers_) {
    put(l.w_qkv);
    put(l.w_out);
    put(l.w_up);
    put(l.b_up);
    put(l.w_down);
    put(l.b_down);
  }
  return bytes;
}

std::size_t Backbone::parameter_count() const {
  std::size_t n = cls_.size();
  for (const Layer& l : layers_) {
    n += l.w_qkv.size() + l.w_out.size() + l.w_up.size() + l.b_up.size() + l.w_down.size() + l.b_down.size();
  }
  return n;
}

Matrix patch_shuffle(const Matrix& patches, std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x5A0FF1E));
  const auto order = rng.permutation(patches.rows());
  Matrix out(patches.rows(), patches.cols());
  for (std::size_t r = 0; r < patches.rows(); ++r) {
    std::copy(patches.row(order[r]).begin(), patches.row(order[r]).end(), out.row(r).begin());
  }
  return out;
}

}  // namespace lava
