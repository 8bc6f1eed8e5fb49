// SPDX-License-Identifier: Apache-2.0
#include "lava/trainer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "lava/error.hpp"
#include "lava/numerics.hpp"

namespace lava {

void OptimizerConfig::validate() const {
  auto positive = [](double v, const char* field) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("must be positive", field);
  };
  positive(lr0, "optimizer.lr0");
  positive(eps, "optimizer.eps");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("must lie in (0, 1)", "optimizer.beta1");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("must lie in (0, 1)", "optimizer.beta2");
  if (!(weight_decay >= 0.0)) throw ConfigError("must be non-negative", "optimizer.weight_decay");
  if (epochs < 1) throw ConfigError("must be at least 1", "optimizer.epochs");
  if (batch_size < 1) throw ConfigError("must be at least 1", "optimizer.batch_size");
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps == 0) return lr0;
  if (step > total_steps) throw ContractViolation("cosine_lr: step beyond total_steps");
  if (step == total_steps) return 0.0;
  const double x = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * x));
}

void adamw_step(Matrix& param, const Matrix& grad, AdamMoments& moments, std::size_t step, double lr,
                const OptimizerConfig& cfg) {
  if (!same_shape(param, grad)) throw ContractViolation("adamw_step: gradient shape mismatch");
  if (step < 1) throw ContractViolation("adamw_step: step is 1-based");
  if (moments.m.empty() && moments.v.empty() && !param.empty()) {
    moments.m = Matrix(param.rows(), param.cols());
    moments.v = Matrix(param.rows(), param.cols());
  }
  if (!same_shape(param, moments.m) || !same_shape(param, moments.v)) {
    throw ContractViolation("adamw_step: moment shape mismatch");
  }
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  auto p = param.values();
  auto g = grad.values();
  auto m = moments.m.values();
  auto v = moments.v.values();
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    p[i] = p[i] - lr * cfg.weight_decay * p[i] - lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

EpochLog evaluate_objective(const LavaModel& model, std::size_t t, const std::vector<Sample>& samples,
                            bool bypass_stem) {
  if (samples.empty()) throw ContractViolation("evaluate_objective: empty sample set");
  EpochLog log;
  std::size_t correct = 0;
  for (const Sample& s : samples) {
    const TrainForward f = model.forward_train(s, t, bypass_stem);
    log.ce += f.ce;
    log.l_struct += f.l_struct;
    std::size_t best = 0;
    for (std::size_t c = 1; c < f.logits.size(); ++c)
      if (f.logits[c] > f.logits[best]) best = c;
    if (best == s.label) ++correct;
  }
  const double n = static_cast<double>(samples.size());
  log.ce /= n;
  log.l_struct /= n;
  log.train_accuracy = static_cast<double>(correct) / n;
  return log;
}

namespace {

std::vector<Matrix*> parameter_blocks(DomainModelState& s) {
  std::vector<Matrix*> blocks{&s.prompt.tokens, &s.visual.anchors};
  if (s.prototypes) blocks.push_back(&s.prototypes->prototypes);
  blocks.push_back(&s.classifier.weight);
  blocks.push_back(&s.classifier.bias);
  return blocks;
}

std::vector<const Matrix*> gradient_blocks(const DomainGradients& g, bool has_prototypes) {
  std::vector<const Matrix*> blocks{&g.prompt, &g.visual};
  if (has_prototypes) blocks.push_back(&g.prototypes);
  blocks.push_back(&g.weight);
  blocks.push_back(&g.bias);
  return blocks;
}

}  // namespace

TrainLog train_domain(LavaModel& model, std::size_t t, const DomainDataset& data, const OptimizerConfig& cfg) {
  cfg.validate();
  if (data.train.empty()) throw ContractViolation("train_domain: empty training set");
  if (t + 1 != model.domain_count()) throw StateError("train_domain: domain " + std::to_string(t + 1) + " is not the newest");
  DomainModelState& state = model.mutable_domain(t);
  if (state.frozen) throw StateError("train_domain: domain " + std::to_string(t + 1) + " is frozen");

  const std::size_t n = data.train.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = batches * cfg.epochs;
  if (!state.optimizer) state.optimizer = DomainOptimizerState{};
  DomainOptimizerState& opt = *state.optimizer;
  auto params = parameter_blocks(state);
  opt.blocks.resize(params.size());

  Rng shuffle(mix_seed(state.init_seed, 0x5eedULL));
  TrainLog log;
  log.domain = t;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = shuffle.permutation(n);
    EpochLog e;
    e.epoch = epoch + 1;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * cfg.batch_size;
      const std::size_t hi = std::min(n, lo + cfg.batch_size);
      DomainGradients grads = model.zero_gradients(t);
      for (std::size_t i = lo; i < hi; ++i) {
        const Sample& s = data.train[order[i]];
        TrainForward f;
        try {
          f = model.forward_train(s, t, data.bypass_stem, &grads);
        } catch (const NumericError& err) {
          throw NumericError("domain " + std::to_string(t + 1) + " epoch " + std::to_string(epoch + 1) + " step " +
                             std::to_string(b + 1) + ": " + err.what());
        }
        if (!std::isfinite(f.total)) {
          throw NumericError("non-finite loss at domain " + std::to_string(t + 1) + " epoch " +
                             std::to_string(epoch + 1) + " step " + std::to_string(b + 1));
        }
        e.ce += f.ce;
        e.l_struct += f.l_struct;
        std::size_t best = 0;
        for (std::size_t c = 1; c < f.logits.size(); ++c)
          if (f.logits[c] > f.logits[best]) best = c;
        if (best == s.label) ++correct;
      }
      grads.scale(1.0 / static_cast<double>(hi - lo));
      const double lr = cosine_lr(epoch * batches + b, total_steps, cfg.lr0);
      ++opt.step;
      const auto gblocks = gradient_blocks(grads, state.prototypes.has_value());
      for (std::size_t k = 0; k < params.size(); ++k) adamw_step(*params[k], *gblocks[k], opt.blocks[k], opt.step, lr, cfg);
    }
    e.ce /= static_cast<double>(n);
    e.l_struct /= static_cast<double>(n);
    e.train_accuracy = static_cast<double>(correct) / static_cast<double>(n);
    log.epochs.push_back(e);
  }
  state.trained = true;
  return log;
}

void freeze_domain(LavaModel& model, std::size_t t) {
  DomainModelState& state = model.mutable_domain(t);
  if (!state.trained) throw StateError("freeze_domain: domain " + std::to_string(t + 1) + " has not been trained");
  if (state.frozen) {
    warn("freeze_domain: domain " + std::to_string(t + 1) + " is already frozen");
    return;
  }
  state.frozen = true;
  state.visual.frozen = true;
  state.prompt.frozen = true;
  if (state.prototypes) state.prototypes->frozen = true;
  state.classifier.frozen = true;
  state.optimizer.reset();
}

}  // namespace lava
