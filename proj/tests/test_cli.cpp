// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const char* kConfig = R"({
  "seed": 3,
  "benchmark": {"domains": 2, "classes": 4, "dim": 16, "patch_count": 3, "train_per_class": 4,
                "val_per_class": 2, "test_per_class": 4, "text_dim": 8},
  "backbone": {"depth": 2, "heads": 2, "mlp_ratio": 2},
  "model": {"prompt_length": 2},
  "optimizer": {"epochs": 2, "batch_size": 8},
  "identification": {"layers": [1, 2]}
})";

struct Sandbox {
  fs::path root;
  Sandbox() {
    root = fs::temp_directory_path() / ("lava_cli_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    std::ofstream(root / "tiny.json") << kConfig;
  }
  ~Sandbox() { fs::remove_all(root); }
};

int run(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " \"" LAVA_CLI_PATH "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("train then oracle eval succeeds with zero forgetting") {
  Sandbox box;
  const fs::path out = box.root / "run";
  REQUIRE(run("train -c " + (box.root / "tiny.json").string() + " -o " + out.string()) == 0);
  for (const char* f : {"config.json", "checkpoint.json", "train_log.csv", "metrics.csv", "summary.json"}) {
    CHECK(fs::exists(out / f));
  }
  const fs::path ev = box.root / "eval";
  REQUIRE(run("eval " + (out / "checkpoint.json").string() + " --oracle -o " + ev.string()) == 0);
  const auto summary = nlohmann::json::parse(slurp(ev / "summary.json"));
  CHECK(summary.at("F_T").get<double>() == 0.0);
  CHECK(nlohmann::json::parse(slurp(ev / "config.json")) == nlohmann::json::parse(slurp(out / "config.json")));
}

TEST_CASE("repeated runs write identical bytes") {
  Sandbox box;
  const std::string cfg = (box.root / "tiny.json").string();
  REQUIRE(run("train -c " + cfg + " -o " + (box.root / "a").string()) == 0);
  REQUIRE(run("train -c " + cfg + " -o " + (box.root / "b").string()) == 0);
  for (const char* f : {"config.json", "checkpoint.json", "train_log.csv", "metrics.csv", "summary.json"}) {
    CHECK(slurp(box.root / "a" / f) == slurp(box.root / "b" / f));
  }
}

TEST_CASE("config errors exit with code 2") {
  Sandbox box;
  const std::string cfg = (box.root / "tiny.json").string();
  CHECK(run("train -c " + cfg + " --set model.bogus=1 -o " + (box.root / "x").string()) == 2);
  CHECK(run("train -c " + cfg + " --set loss.tau=-1 -o " + (box.root / "x").string()) == 2);
  CHECK(run("train -c " + (box.root / "missing.json").string()) == 2);
  CHECK(run("frobnicate") == 2);
  CHECK_FALSE(fs::exists(box.root / "x"));
}

TEST_CASE("numeric failures exit with code 3") {
  Sandbox box;
  CHECK(run("train -c " + (box.root / "tiny.json").string() + " --set optimizer.lr0=1e300 -o " +
            (box.root / "x").string()) == 3);
}

TEST_CASE("other failures exit with code 1") {
  Sandbox box;
  CHECK(run("eval " + (box.root / "missing_checkpoint.json").string()) == 1);
}

TEST_CASE("output directory precedence: flag, config, environment") {
  Sandbox box;
  const std::string cfg = (box.root / "tiny.json").string();
  const std::string env = "LAVA_OUTPUT_DIR=\"" + (box.root / "env").string() + "\"";
  REQUIRE(run("gen-data -c " + cfg, env) == 0);
  CHECK(fs::exists(box.root / "env" / "anchors.jsonl"));
  REQUIRE(run("gen-data -c " + cfg + " --set output_dir=" + (box.root / "cfg").string(), env) == 0);
  CHECK(fs::exists(box.root / "cfg" / "anchors.jsonl"));
  REQUIRE(run("gen-data -c " + cfg + " -o " + (box.root / "flag").string(), env) == 0);
  CHECK(fs::exists(box.root / "flag" / "anchors.jsonl"));
}
