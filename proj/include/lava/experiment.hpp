// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lava/datagen.hpp"
#include "lava/domain_id.hpp"
#include "lava/metrics.hpp"
#include "lava/model.hpp"
#include "lava/trainer.hpp"

namespace lava {

using Json = nlohmann::ordered_json;

struct IdentificationConfig {
  IdStrategy strategy;
  bool search = false;  // run greedy_layer_search for the MLFI layers
  bool oracle = false;  // route every test sample to its true domain
};

/// Axes swept one at a time by `ablate`, each from the base config.
struct AblationGrid {
  bool components = true;  // baseline / +VL-RSA / +CA-CDFA
  std::vector<StructVariant> variants{StructVariant::kl, StructVariant::l1, StructVariant::l2, StructVariant::none};
  std::vector<double> lambdas;
  std::vector<std::size_t> prompt_lengths;
  std::vector<bool> share;
  std::vector<std::vector<std::size_t>> orders;  // 1-based
};

/// Real-feature input: one feature JSONL file per domain plus an anchor file.
struct FeatureInput {
  std::string anchors;
  std::vector<std::string> files;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  BenchmarkConfig benchmark;
  /// Depth, heads, mlp ratio and seed; width and patch count follow the data.
  BackboneConfig backbone;
  bool backbone_seed_set = false;
  bool benchmark_seed_set = false;
  ModelConfig model;
  OptimizerConfig optimizer;
  IdentificationConfig identification;
  std::vector<std::size_t> domain_order;  // 1-based; empty means identity
  std::optional<FeatureInput> features;
  std::string output_dir;
  AblationGrid ablate;

  /// Fills derived fields (backbone width, seeds) and validates everything.
  void resolve();
};

/// Strict parse: unknown keys and wrong types raise ConfigError naming the
/// dotted field path.
ExperimentConfig parse_experiment_config(const Json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
Json to_json(const ExperimentConfig& cfg);
/// `key.path=value`; the value is read as JSON when it parses, else as a string.
void apply_override(Json& j, const std::string& assignment);

/// Data stream in training order, plus the class anchors.
struct PreparedData {
  std::vector<DomainDataset> domains;
  TextAnchorSet text;
  std::vector<std::size_t> order;  // 0-based: position k holds generated domain order[k]
};

PreparedData prepare_data(const ExperimentConfig& cfg);

/// Unprompted all-layer features for one split of every domain.
std::vector<LayerFeatureCache> feature_caches(const Backbone& backbone, const std::vector<DomainDataset>& domains,
                                              const std::string& split);

struct EvalResult {
  AccuracyMatrix matrix;
  std::optional<double> id_accuracy;
  /// routes[i][n]: domain chosen for test sample n of domain i at the final stage.
  std::vector<std::vector<std::size_t>> routes;
  /// predictions[j][i][n]: label predicted at stage j.
  std::vector<std::vector<std::vector<std::size_t>>> predictions;
};

/// Algorithm-1 inference over every seen test set at every stage. A stage j
/// uses domains 0..j of the model and bank; frozen prefixes make this equal
/// to evaluating right after stage j.
EvalResult evaluate_stream(const LavaModel& model, const PrototypeBank& bank, const std::vector<DomainDataset>& domains,
                           const std::vector<LayerFeatureCache>& test_features, bool oracle);

struct RunResult {
  LavaModel model;
  PrototypeBank bank;
  std::vector<TrainLog> logs;
  std::vector<double> initial_struct;  // train-set L_Struct before training, per domain
  std::vector<double> final_struct;    // and after
  std::optional<LayerSearchReport> search;
};

using StageHook = std::function<void(const LavaModel&, const PrototypeBank&, std::size_t stage)>;

/// Trains the stream domain by domain, freezing each and adding its
/// identification prototypes offline.
RunResult run_training(const ExperimentConfig& cfg, const PreparedData& data, const StageHook& hook = {});

ModelConfig model_config_for(const ExperimentConfig& cfg, const PreparedData& data);

/// Checkpoint container ("lava-checkpoint", version 1); see docs/checkpoint.md.
Json checkpoint_json(const ExperimentConfig& cfg, const PreparedData& data, const RunResult& run);
std::string serialize_checkpoint(const ExperimentConfig& cfg, const PreparedData& data, const RunResult& run);

struct LoadedCheckpoint {
  ExperimentConfig config;
  LavaModel model;
  PrototypeBank bank;
};
LoadedCheckpoint parse_checkpoint(const Json& j);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

Json matrix_json(const Matrix& m);
Matrix matrix_from_json(const Json& j, const std::string& field);

}  // namespace lava
