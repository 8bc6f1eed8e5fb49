// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "lava/commands.hpp"
#include "lava/error.hpp"
#include "lava/experiment.hpp"

using namespace lava;

namespace {

Json tiny_json() {
  return Json::parse(R"({
    "seed": 3,
    "benchmark": {"domains": 2, "classes": 4, "dim": 16, "patch_count": 3, "train_per_class": 4,
                  "val_per_class": 2, "test_per_class": 4, "text_dim": 8},
    "backbone": {"depth": 2, "heads": 2, "mlp_ratio": 2},
    "model": {"prompt_length": 2},
    "optimizer": {"epochs": 2, "batch_size": 8},
    "identification": {"layers": [1, 2]}
  })");
}

ExperimentConfig tiny() {
  ExperimentConfig c = parse_experiment_config(tiny_json());
  c.resolve();
  return c;
}

std::string error_field(const Json& j) {
  try {
    ExperimentConfig c = parse_experiment_config(j);
    c.resolve();
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "<none>";
}

}  // namespace

TEST_CASE("unknown keys and bad values name the dotted field") {
  Json j = tiny_json();
  j["model"]["bogus"] = 1;
  CHECK(error_field(j) == "model.bogus");
  j = tiny_json();
  j["extra"] = true;
  CHECK(error_field(j) == "extra");
  j = tiny_json();
  j["benchmark"]["shift"] = {{"angle", 3}};
  CHECK(error_field(j) == "benchmark.shift.angle");
  j = tiny_json();
  j["loss"] = {{"tau", -1}};
  CHECK(error_field(j) == "loss.tau");
  j = tiny_json();
  j["optimizer"]["epochs"] = "many";
  CHECK(error_field(j) == "optimizer.epochs");
  j = tiny_json();
  j["identification"]["layers"] = {1, 7};
  CHECK(error_field(j) == "identification.layers");
  j = tiny_json();
  j["domain_order"] = {1, 1};
  CHECK(error_field(j) == "domain_order");
  j = tiny_json();
  j["backbone"]["heads"] = 3;
  CHECK(error_field(j) == "backbone.heads");
  j = tiny_json();
  j["identification"]["strategy"] = "svm";
  CHECK(error_field(j) == "identification.strategy");
}

TEST_CASE("paper lambda values are accepted and defaults resolved") {
  for (double lambda : {0.2, 1.0, 0.5}) {
    Json j = tiny_json();
    j["loss"] = {{"lambda", lambda}};
    ExperimentConfig c = parse_experiment_config(j);
    c.resolve();
    CHECK(c.model.loss.lambda == lambda);
  }
  const ExperimentConfig c = tiny();
  CHECK(c.model.loss.tau == 0.07);
  CHECK(c.model.loss.variant == StructVariant::kl);
  CHECK(c.optimizer.lr0 == 0.01);
  CHECK(c.backbone.hidden_dim == 16);
  CHECK(c.backbone.patch_count == 3);
  CHECK(c.benchmark.seed == mix_seed(3, 1));
  CHECK(c.backbone.seed == mix_seed(3, 2));
}

TEST_CASE("layer search keyword") {
  Json j = tiny_json();
  j["identification"]["layers"] = "search";
  ExperimentConfig c = parse_experiment_config(j);
  CHECK(c.identification.search);
  j["identification"]["layers"] = "best";
  CHECK(error_field(j) == "identification.layers");
}

TEST_CASE("overrides parse JSON values and create nested objects") {
  Json j = tiny_json();
  apply_override(j, "loss.lambda=0.5");
  apply_override(j, "loss.variant=l2");
  apply_override(j, "model.share=true");
  apply_override(j, "domain_order=[2,1]");
  ExperimentConfig c = parse_experiment_config(j);
  c.resolve();
  CHECK(c.model.loss.lambda == 0.5);
  CHECK(c.model.loss.variant == StructVariant::l2);
  CHECK(c.model.share);
  CHECK(c.domain_order == std::vector<std::size_t>{2, 1});
  CHECK_THROWS_AS(apply_override(j, "novalue"), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "seed.x=1"), ConfigError);
}

TEST_CASE("resolved config round-trips through JSON") {
  const ExperimentConfig c = tiny();
  const Json j = to_json(c);
  ExperimentConfig back = parse_experiment_config(j);
  back.resolve();
  CHECK(to_json(back).dump() == j.dump());
}

TEST_CASE("checkpoint round trip reproduces predictions and bytes") {
  const ExperimentConfig cfg = tiny();
  const PreparedData data = prepare_data(cfg);
  const RunResult run = run_training(cfg, data);
  const std::string bytes = serialize_checkpoint(cfg, data, run);
  const LoadedCheckpoint loaded = parse_checkpoint(Json::parse(bytes));
  CHECK(loaded.model.domain_count() == 2);
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(loaded.model.domain(t).serialize() == run.model.domain(t).serialize());
    CHECK(loaded.model.domain(t).frozen);
  }
  CHECK(loaded.model.backbone().serialize_weights() == run.model.backbone().serialize_weights());
  CHECK(loaded.model.text().fingerprint() == run.model.text().fingerprint());
  CHECK(loaded.bank.entries().size() == run.bank.entries().size());
  for (std::size_t k = 0; k < run.bank.entries().size(); ++k) CHECK(loaded.bank.entries()[k].mu == run.bank.entries()[k].mu);
  for (const Sample& s : data.domains[1].test) CHECK(loaded.model.predict_logits(s, 1, false) == run.model.predict_logits(s, 1, false));

  PreparedData reloaded = prepare_data(loaded.config);
  RunResult again{loaded.model, loaded.bank, run.logs, run.initial_struct, run.final_struct, run.search};
  CHECK(serialize_checkpoint(loaded.config, reloaded, again) == bytes);

  Json bad = Json::parse(bytes);
  bad["version"] = 99;
  CHECK_THROWS(parse_checkpoint(bad));
  Json wrong = Json::parse(bytes);
  wrong["format"] = "other";
  CHECK_THROWS(parse_checkpoint(wrong));
}

TEST_CASE("oracle identification gives zero forgetting") {
  ExperimentConfig cfg = tiny();
  cfg.identification.oracle = true;
  const MetricsReport report = run_and_report(cfg);
  REQUIRE(report.forgetting.has_value());
  CHECK(*report.forgetting == 0.0);
}

TEST_CASE("oracle A_T is order-invariant when domains are isolated") {
  // Cross-domain aggregation reads earlier domains' frozen anchors, so only the
  // isolated model is exactly invariant; domain seeds follow identity, not position.
  ExperimentConfig cfg = tiny();
  cfg.benchmark.domains = 3;
  cfg.identification.oracle = true;
  cfg.model.aggregation = false;
  cfg.resolve();
  const MetricsReport forward = run_and_report(cfg);
  for (const std::vector<std::size_t>& order : {std::vector<std::size_t>{3, 1, 2}, std::vector<std::size_t>{2, 3, 1}}) {
    ExperimentConfig p = cfg;
    p.domain_order = order;
    p.resolve();
    const MetricsReport permuted = run_and_report(p);
    CHECK(*permuted.forgetting == 0.0);
    CHECK(permuted.avg_task_accuracy == doctest::Approx(forward.avg_task_accuracy).epsilon(1e-12));
  }
}

TEST_CASE("train artifacts are deterministic and echo the config") {
  const ExperimentConfig cfg = tiny();
  const Artifacts a = cmd_train(cfg), b = cmd_train(cfg);
  REQUIRE(a.files.size() == b.files.size());
  for (std::size_t i = 0; i < a.files.size(); ++i) {
    CHECK(a.files[i].first == b.files[i].first);
    CHECK(a.files[i].second == b.files[i].second);
  }
  CHECK(Json::parse(a.file("config.json")) == to_json(cfg));
  CHECK(a.file("metrics.csv").rfind("stage,domain,accuracy\n", 0) == 0);
  CHECK(a.file("train_log.csv").rfind("domain,epoch,ce,l_struct,train_accuracy\n", 0) == 0);
}

TEST_CASE("ablation variant sweep yields one row per variant") {
  ExperimentConfig cfg = tiny();
  cfg.ablate.components = false;
  const auto rows = run_ablation(cfg);
  std::vector<std::string> values;
  for (const auto& r : rows)
    if (r.axis == "variant") values.push_back(r.value);
  CHECK(values == std::vector<std::string>{"kl", "l1", "l2", "none"});
  const std::string csv = ablation_csv(rows);
  CHECK(csv.rfind("axis,value,A_A,A_T,F_T,A_cls\n", 0) == 0);
}

TEST_CASE("strategy comparison covers the four strategies") {
  const ExperimentConfig cfg = tiny();
  const PreparedData data = prepare_data(cfg);
  const RunResult run = run_training(cfg, data);
  const auto rows = compare_strategies(cfg, data, run, default_strategies(cfg, run));
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].kind == IdKind::mlfi);
  for (const auto& r : rows) {
    CHECK(r.id_accuracy >= 0.0);
    CHECK(r.id_accuracy <= 1.0);
  }
}

TEST_CASE("generated token datasets describe themselves") {
  const ExperimentConfig cfg = tiny();
  const Artifacts a = cmd_gen_data(cfg);
  const std::string& d1 = a.file("domain_1.jsonl");
  const Json header = Json::parse(d1.substr(0, d1.find('\n')));
  CHECK(header["dim"] == 16);
  CHECK(header["patches"] == 3);
  CHECK(header["count"] == (4 + 2 + 4) * 4);
  CHECK(header["domain"] == 1);
  const std::string& anchors = a.file("anchors.jsonl");
  CHECK(Json::parse(anchors.substr(0, anchors.find('\n')))["count"] == 4);
}
