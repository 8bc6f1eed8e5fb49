// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lava/experiment.hpp"

namespace lava {

/// Files a subcommand produces, in write order, as (relative name, bytes).
struct Artifacts {
  std::vector<std::pair<std::string, std::string>> files;
  std::vector<std::string> notes;  // human-readable summary lines

  const std::string& file(const std::string& name) const;
};

struct AblationRow {
  std::string axis;
  std::string value;
  MetricsReport report;
};

struct StrategyRow {
  IdKind kind;
  double id_accuracy = 0.0;
  double average_accuracy = 0.0;
  std::vector<std::vector<std::size_t>> routes;
};

/// Token-grid JSON Lines for one generated domain: header
/// {"dim","patches","count","domain","name"}, then {"label","split","tokens"}.
std::string token_dataset_jsonl(const DomainDataset& data);

/// Strategy comparison over one trained run: A_cls and A_A per strategy.
std::vector<StrategyRow> compare_strategies(const ExperimentConfig& cfg, const PreparedData& data, const RunResult& run,
                                            const std::vector<IdStrategy>& strategies);
std::vector<IdStrategy> default_strategies(const ExperimentConfig& cfg, const RunResult& run);

std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg);
std::string ablation_csv(const std::vector<AblationRow>& rows);

/// Metrics of one full run (train then evaluate).
MetricsReport run_and_report(const ExperimentConfig& cfg);

Artifacts cmd_gen_data(const ExperimentConfig& cfg);
Artifacts cmd_train(const ExperimentConfig& cfg);
Artifacts cmd_eval(const LoadedCheckpoint& ckpt, bool oracle);
Artifacts cmd_ablate(const ExperimentConfig& cfg);
Artifacts cmd_layer_search(const ExperimentConfig& cfg);
Artifacts cmd_id_compare(const ExperimentConfig& cfg);

}  // namespace lava
