// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lava/datagen.hpp"
#include "lava/model.hpp"

namespace lava {

struct OptimizerConfig {
  double lr0 = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  std::size_t epochs = 20;
  std::size_t batch_size = 32;

  void validate() const;
};

/// lr0 * (1 + cos(pi * step / total)) / 2.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

/// One AdamW update. `step` is 1-based (bias correction). Weight decay is
/// decoupled: param -= lr * wd * param, separate from the moment term.
void adamw_step(Matrix& param, const Matrix& grad, AdamMoments& moments, std::size_t step, double lr,
                const OptimizerConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double ce = 0.0;
  double l_struct = 0.0;
  double train_accuracy = 0.0;
};

struct TrainLog {
  std::size_t domain = 0;
  std::vector<EpochLog> epochs;
};

/// Mean CE / L_Struct / accuracy of the current parameters over a sample set.
EpochLog evaluate_objective(const LavaModel& model, std::size_t t, const std::vector<Sample>& samples,
                            bool bypass_stem);

/// Optimizes the domain-t parameters on `data.train` only. Domain t must be
/// the newest, unfrozen domain; it stays unfrozen on return.
TrainLog train_domain(LavaModel& model, std::size_t t, const DomainDataset& data, const OptimizerConfig& cfg);

/// Marks domain t frozen and drops its optimizer moments.
void freeze_domain(LavaModel& model, std::size_t t);

}  // namespace lava
