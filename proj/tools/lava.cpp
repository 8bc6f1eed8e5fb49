// SPDX-License-Identifier: Apache-2.0
// lava: experiment driver (gen-data, train, eval, ablate, layer-search, id-compare).
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lava/commands.hpp"
#include "lava/error.hpp"

namespace fs = std::filesystem;
using namespace lava;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kNumeric = 3 };

ExperimentConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  Json j = Json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path, "<config>");
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw ConfigError(std::string("invalid JSON: ") + e.what(), "<config>");
    }
  }
  for (const auto& o : overrides) apply_override(j, o);
  return parse_experiment_config(j);
}

fs::path output_dir(const std::string& flag, const std::string& from_config) {
  if (!flag.empty()) return flag;
  if (!from_config.empty()) return from_config;
  if (const char* env = std::getenv("LAVA_OUTPUT_DIR"); env && *env) return env;
  return "lava_out";
}

void write_artifacts(const Artifacts& a, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [name, bytes] : a.files) {
    const fs::path p = dir / name;
    std::ofstream out(p, std::ios::binary);
    out << bytes;
    if (!out) throw Error("cannot write " + p.string());
    std::cout << p.string() << "\n";
  }
  for (const auto& n : a.notes) std::cerr << n << "\n";
}

void flush_warnings() {
  for (const auto& w : take_warnings()) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LAVA domain-incremental learning driver"};
  app.require_subcommand(1);
  std::string config_path, out_flag, checkpoint_path;
  std::vector<std::string> overrides;
  bool oracle = false;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "experiment config (JSON)");
    sub->add_option("--set", overrides, "override a config field, e.g. --set loss.lambda=0.5");
    sub->add_option("-o,--out", out_flag, "output directory (default: config output_dir, then $LAVA_OUTPUT_DIR)");
  };
  CLI::App* gen = app.add_subcommand("gen-data", "write the synthetic benchmark and anchors");
  CLI::App* train = app.add_subcommand("train", "train every domain in order and write a checkpoint");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint over all seen test sets");
  CLI::App* ablate = app.add_subcommand("ablate", "sweep components, loss variants, lambda, N_p, share, orders");
  CLI::App* search = app.add_subcommand("layer-search", "greedy search for the MLFI layer set");
  CLI::App* compare = app.add_subcommand("id-compare", "compare MLFI, NMC, KNN and PSS identification");
  for (CLI::App* sub : {gen, train, ablate, search, compare}) add_common(sub);
  eval->add_option("checkpoint", checkpoint_path, "checkpoint.json from train")->required();
  eval->add_option("-o,--out", out_flag, "output directory");
  eval->add_flag("--oracle", oracle, "route every test sample to its true domain");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  std::string stage = "setup";
  try {
    Artifacts artifacts;
    fs::path dir;
    if (eval->parsed()) {
      stage = "loading checkpoint";
      const LoadedCheckpoint ckpt = load_checkpoint(checkpoint_path);
      stage = "evaluation";
      artifacts = cmd_eval(ckpt, oracle);
      dir = output_dir(out_flag, ckpt.config.output_dir);
    } else {
      const ExperimentConfig cfg = resolve_config(config_path, overrides);
      dir = output_dir(out_flag, cfg.output_dir);
      if (gen->parsed()) {
        stage = "data generation";
        artifacts = cmd_gen_data(cfg);
      } else if (train->parsed()) {
        stage = "training";
        artifacts = cmd_train(cfg);
      } else if (ablate->parsed()) {
        stage = "ablation";
        artifacts = cmd_ablate(cfg);
      } else if (search->parsed()) {
        stage = "layer search";
        artifacts = cmd_layer_search(cfg);
      } else {
        stage = "strategy comparison";
        artifacts = cmd_id_compare(cfg);
      }
    }
    write_artifacts(artifacts, dir);
    flush_warnings();
    return kOk;
  } catch (const ConfigError& e) {
    flush_warnings();
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const NumericError& e) {
    flush_warnings();
    std::cerr << "numeric failure during " << stage << ": " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    flush_warnings();
    std::cerr << "error during " << stage << ": " << e.what() << "\n";
    return kFailure;
  }
}
