// SPDX-License-Identifier: Apache-2.0
#include "lava/commands.hpp"

#include <cstdio>
#include <sstream>

#include "lava/error.hpp"

namespace lava {

const std::string& Artifacts::file(const std::string& name) const {
  for (const auto& [n, bytes] : files)
    if (n == name) return bytes;
  throw StateError("no artifact named " + name);
}

namespace {

std::string config_echo(const ExperimentConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string train_log_csv(const std::vector<TrainLog>& logs) {
  std::string out = "domain,epoch,ce,l_struct,train_accuracy\n";
  for (const auto& log : logs) {
    for (const auto& e : log.epochs) {
      out += std::to_string(log.domain + 1) + "," + std::to_string(e.epoch) + "," + fmt(e.ce) + "," + fmt(e.l_struct) +
             "," + fmt(e.train_accuracy) + "\n";
    }
  }
  return out;
}

}  // namespace

std::string token_dataset_jsonl(const DomainDataset& data) {
  std::ostringstream out;
  const std::size_t count = data.train.size() + data.val.size() + data.test.size();
  const Sample& first = !data.train.empty() ? data.train.front() : data.test.front();
  Json header{{"dim", first.tokens.cols()},
              {"patches", first.tokens.rows()},
              {"count", count},
              {"domain", data.domain_id + 1},
              {"name", data.name}};
  out << header.dump() << "\n";
  auto emit = [&out](const std::vector<Sample>& split, const char* name) {
    for (const Sample& s : split) {
      Json rows = Json::array();
      for (std::size_t r = 0; r < s.tokens.rows(); ++r)
        rows.push_back(std::vector<double>(s.tokens.row(r).begin(), s.tokens.row(r).end()));
      out << Json{{"label", s.label}, {"split", name}, {"tokens", rows}}.dump() << "\n";
    }
  };
  emit(data.train, "train");
  emit(data.val, "val");
  emit(data.test, "test");
  return out.str();
}

Artifacts cmd_gen_data(const ExperimentConfig& cfg) {
  Artifacts a;
  a.files.push_back({"config.json", config_echo(cfg)});
  const PreparedData data = prepare_data(cfg);
  std::ostringstream anchors;
  write_text_anchors(anchors, data.text);
  a.files.push_back({"anchors.jsonl", anchors.str()});
  for (std::size_t k = 0; k < data.domains.size(); ++k) {
    const DomainDataset& d = data.domains[k];
    if (d.bypass_stem) {
      std::ostringstream f;
      write_feature_dataset(f, d);
      a.files.push_back({"domain_" + std::to_string(k + 1) + ".jsonl", f.str()});
    } else {
      a.files.push_back({"domain_" + std::to_string(k + 1) + ".jsonl", token_dataset_jsonl(d)});
    }
  }
  if (!cfg.features) {
    const Benchmark b = generate_benchmark(cfg.benchmark);
    Json summary;
    summary["domains"] = b.domains.size();
    summary["classes"] = cfg.benchmark.classes;
    summary["gram_disagreement"] = Json::array();
    for (std::size_t t = 1; t < b.class_means.size(); ++t) {
      summary["gram_disagreement"].push_back(
          {{"domain", t + 1}, {"vs", 1}, {"frobenius", gram_disagreement(b.class_means[0], b.class_means[t])}});
    }
    a.files.push_back({"benchmark_summary.json", summary.dump(2) + "\n"});
  }
  a.notes.push_back("generated " + std::to_string(data.domains.size()) + " domains");
  return a;
}

Artifacts cmd_train(const ExperimentConfig& cfg) {
  Artifacts a;
  a.files.push_back({"config.json", config_echo(cfg)});
  const PreparedData data = prepare_data(cfg);
  RunResult run = run_training(cfg, data);
  a.files.push_back({"checkpoint.json", serialize_checkpoint(cfg, data, run)});
  a.files.push_back({"train_log.csv", train_log_csv(run.logs)});
  if (run.search) a.files.push_back({"layer_search.json", run.search->to_json()});
  const auto tests = feature_caches(run.model.backbone(), data.domains, "test");
  const EvalResult ev = evaluate_stream(run.model, run.bank, data.domains, tests, cfg.identification.oracle);
  const MetricsReport report = make_report(ev.matrix, cfg.identification.oracle ? std::nullopt : ev.id_accuracy);
  a.files.push_back({"metrics.csv", accuracy_csv(ev.matrix)});
  a.files.push_back({"summary.json", report.to_json()});
  a.notes.push_back("A_A " + fmt(report.average_accuracy) + ", A_T " + fmt(report.avg_task_accuracy));
  return a;
}

Artifacts cmd_eval(const LoadedCheckpoint& ckpt, bool oracle) {
  Artifacts a;
  a.files.push_back({"config.json", config_echo(ckpt.config)});
  const PreparedData data = prepare_data(ckpt.config);
  if (data.domains.size() < ckpt.model.domain_count()) throw StateError("checkpoint has more domains than its data stream");
  const auto tests = feature_caches(ckpt.model.backbone(), data.domains, "test");
  const EvalResult ev = evaluate_stream(ckpt.model, ckpt.bank, data.domains, tests, oracle);
  const MetricsReport report = make_report(ev.matrix, oracle ? std::nullopt : ev.id_accuracy);
  a.files.push_back({"metrics.csv", accuracy_csv(ev.matrix)});
  a.files.push_back({"summary.json", report.to_json()});
  a.notes.push_back("A_A " + fmt(report.average_accuracy) + ", A_T " + fmt(report.avg_task_accuracy) + ", F_T " +
                    (report.forgetting ? fmt(*report.forgetting) : std::string("n/a")));
  return a;
}

MetricsReport run_and_report(const ExperimentConfig& cfg) {
  const PreparedData data = prepare_data(cfg);
  RunResult run = run_training(cfg, data);
  const auto tests = feature_caches(run.model.backbone(), data.domains, "test");
  const EvalResult ev = evaluate_stream(run.model, run.bank, data.domains, tests, cfg.identification.oracle);
  return make_report(ev.matrix, cfg.identification.oracle ? std::nullopt : ev.id_accuracy);
}

std::vector<AblationRow> run_ablation(const ExperimentConfig& base) {
  std::vector<AblationRow> rows;
  auto run = [&rows](const std::string& axis, const std::string& value, ExperimentConfig cfg) {
    cfg.resolve();
    rows.push_back({axis, value, run_and_report(cfg)});
  };
  if (base.ablate.components) {
    ExperimentConfig c = base;
    c.model.loss.variant = StructVariant::none;
    c.model.loss.lambda = 0.0;
    c.model.aggregation = false;
    run("components", "baseline", c);
    c = base;
    if (c.model.loss.variant == StructVariant::none) c.model.loss.variant = StructVariant::kl;
    c.model.aggregation = false;
    run("components", "vl_rsa", c);
    c.model.aggregation = true;
    run("components", "vl_rsa+ca_cdfa", c);
  }
  for (StructVariant v : base.ablate.variants) {
    ExperimentConfig c = base;
    c.model.loss.variant = v;
    run("variant", std::string(to_string(v)), c);
  }
  for (double l : base.ablate.lambdas) {
    ExperimentConfig c = base;
    c.model.loss.lambda = l;
    run("lambda", fmt(l), c);
  }
  for (std::size_t n : base.ablate.prompt_lengths) {
    ExperimentConfig c = base;
    c.model.prompt_length = n;
    run("prompt_length", std::to_string(n), c);
  }
  for (bool s : base.ablate.share) {
    ExperimentConfig c = base;
    c.model.share = s;
    run("share", s ? "on" : "off", c);
  }
  for (const auto& order : base.ablate.orders) {
    ExperimentConfig c = base;
    c.domain_order = order;
    std::string label;
    for (std::size_t k = 0; k < order.size(); ++k) label += (k ? "-" : "") + std::to_string(order[k]);
    run("order", label, c);
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "axis,value,A_A,A_T,F_T,A_cls\n";
  for (const auto& r : rows) {
    out += r.axis + "," + r.value + "," + fmt(r.report.average_accuracy) + "," + fmt(r.report.avg_task_accuracy) + "," +
           (r.report.forgetting ? fmt(*r.report.forgetting) : "") + "," +
           (r.report.id_accuracy ? fmt(*r.report.id_accuracy) : "") + "\n";
  }
  return out;
}

Artifacts cmd_ablate(const ExperimentConfig& cfg) {
  Artifacts a;
  a.files.push_back({"config.json", config_echo(cfg)});
  const auto rows = run_ablation(cfg);
  a.files.push_back({"ablation.csv", ablation_csv(rows)});
  a.notes.push_back(std::to_string(rows.size()) + " ablation rows");
  return a;
}

Artifacts cmd_layer_search(const ExperimentConfig& cfg) {
  Artifacts a;
  a.files.push_back({"config.json", config_echo(cfg)});
  const PreparedData data = prepare_data(cfg);
  const Backbone backbone(model_config_for(cfg, data).backbone);
  const auto train = feature_caches(backbone, data.domains, "train");
  const auto val = feature_caches(backbone, data.domains, "val");
  const LayerSearchReport report = greedy_layer_search(train, val);
  a.files.push_back({"layer_search.json", report.to_json()});
  std::string layers;
  for (std::size_t l : report.best_layers) layers += (layers.empty() ? "" : ",") + std::to_string(l);
  a.notes.push_back("L* = {" + layers + "} accuracy " + fmt(report.best_accuracy));
  return a;
}

std::vector<IdStrategy> default_strategies(const ExperimentConfig& cfg, const RunResult& run) {
  IdStrategy base = cfg.identification.strategy;
  IdStrategy mlfi = base, nmc = base, knn = base, pss = base;
  mlfi.kind = IdKind::mlfi;
  mlfi.mlfi.layers = run.bank.strategy().kind == IdKind::mlfi ? run.bank.layers()
                                                              : std::vector<std::size_t>{run.model.backbone().depth()};
  nmc.kind = IdKind::nmc;
  knn.kind = IdKind::knn;
  pss.kind = IdKind::pss;
  return {mlfi, nmc, knn, pss};
}

std::vector<StrategyRow> compare_strategies(const ExperimentConfig& cfg, const PreparedData& data, const RunResult& run,
                                            const std::vector<IdStrategy>& strategies) {
  (void)cfg;
  const Backbone& bb = run.model.backbone();
  const auto tests = feature_caches(bb, data.domains, "test");
  std::vector<StrategyRow> rows;
  for (const IdStrategy& s : strategies) {
    PrototypeBank bank(s, bb.depth());
    for (const auto& d : data.domains) bank.add_domain(bb, d);
    const EvalResult ev = evaluate_stream(run.model, bank, data.domains, tests, false);
    rows.push_back({s.kind, *ev.id_accuracy, to_double(average_accuracy(ev.matrix)), ev.routes});
  }
  return rows;
}

Artifacts cmd_id_compare(const ExperimentConfig& cfg) {
  Artifacts a;
  a.files.push_back({"config.json", config_echo(cfg)});
  const PreparedData data = prepare_data(cfg);
  RunResult run = run_training(cfg, data);
  const auto rows = compare_strategies(cfg, data, run, default_strategies(cfg, run));
  std::string csv = "strategy,A_cls,A_A\n";
  for (const auto& r : rows) csv += to_string(r.kind) + "," + fmt(r.id_accuracy) + "," + fmt(r.average_accuracy) + "\n";
  a.files.push_back({"id_compare.csv", csv});
  if (run.search) a.files.push_back({"layer_search.json", run.search->to_json()});
  a.notes.push_back(std::to_string(rows.size()) + " strategies compared");
  return a;
}

}  // namespace lava
