// SPDX-License-Identifier: Apache-2.0
#include "lava/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "lava/error.hpp"
#include "lava/numerics.hpp"

namespace lava {

namespace {

// Strict view over one JSON object: every key must be consumed.
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw ConfigError("expected an object", path_.empty() ? "<root>" : path_);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  bool get(const std::string& key, std::size_t& out) {
    const Json* v = find(key);
    if (!v) return false;
    if (!v->is_number_integer() || (v->is_number_integer() && v->get<long long>() < 0 && !v->is_number_unsigned())) {
      throw ConfigError("expected a non-negative integer", field(key));
    }
    out = v->get<std::size_t>();
    return true;
  }
  bool get(const std::string& key, std::uint64_t& out, int) {
    std::size_t v = 0;
    if (!get(key, v)) return false;
    out = v;
    return true;
  }
  bool get(const std::string& key, double& out) {
    const Json* v = find(key);
    if (!v) return false;
    if (!v->is_number()) throw ConfigError("expected a number", field(key));
    out = v->get<double>();
    return true;
  }
  bool get(const std::string& key, bool& out) {
    const Json* v = find(key);
    if (!v) return false;
    if (!v->is_boolean()) throw ConfigError("expected true or false", field(key));
    out = v->get<bool>();
    return true;
  }
  bool get(const std::string& key, std::string& out) {
    const Json* v = find(key);
    if (!v) return false;
    if (!v->is_string()) throw ConfigError("expected a string", field(key));
    out = v->get<std::string>();
    return true;
  }
  bool get(const std::string& key, std::vector<std::size_t>& out) {
    const Json* v = find(key);
    if (!v) return false;
    if (!v->is_array()) throw ConfigError("expected an array of integers", field(key));
    out.clear();
    for (const auto& e : *v) {
      if (!e.is_number_unsigned()) throw ConfigError("expected an array of non-negative integers", field(key));
      out.push_back(e.get<std::size_t>());
    }
    return true;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError("unknown key", field(it.key()));
    }
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<std::size_t> to_zero_based(const std::vector<std::size_t>& v, const std::string& field) {
  std::vector<std::size_t> out;
  for (std::size_t x : v) {
    if (x < 1) throw ConfigError("domain indices are 1-based", field);
    out.push_back(x - 1);
  }
  return out;
}

std::vector<std::size_t> to_one_based(const std::vector<std::size_t>& v) {
  std::vector<std::size_t> out;
  for (std::size_t x : v) out.push_back(x + 1);
  return out;
}

void parse_benchmark(const Json& j, BenchmarkConfig& b, bool& seed_set) {
  Fields f(j, "benchmark");
  f.get("domains", b.domains);
  f.get("classes", b.classes);
  f.get("dim", b.dim);
  f.get("patch_count", b.patch_count);
  f.get("train_per_class", b.train_per_class);
  f.get("val_per_class", b.val_per_class);
  f.get("test_per_class", b.test_per_class);
  f.get("class_scale", b.class_scale);
  f.get("text_dim", b.text_dim);
  f.get("geometry_knob", b.geometry_knob);
  seed_set = f.get("seed", b.seed, 0);
  if (const Json* g = f.find("groups")) {
    Fields fg(*g, "benchmark.groups");
    fg.get("count", b.groups.groups);
    fg.get("intra", b.groups.intra);
    fg.get("inter", b.groups.inter);
    fg.finish();
  }
  if (const Json* s = f.find("shift")) {
    Fields fs(*s, "benchmark.shift");
    fs.get("rotation_deg", b.shift.rotation_deg);
    fs.get("translation", b.shift.translation);
    fs.get("noise_sigma", b.shift.noise_sigma);
    fs.finish();
  }
  if (const Json* c = f.find("cue")) {
    Fields fc(*c, "benchmark.cue");
    fc.get("enabled", b.cue.enabled);
    fc.get("low_amplitude", b.cue.low_amplitude);
    fc.get("high_scale", b.cue.high_scale);
    std::vector<std::size_t> v;
    if (fc.get("low_domains", v)) b.cue.low_domains = to_zero_based(v, "benchmark.cue.low_domains");
    if (fc.get("high_domains", v)) b.cue.high_domains = to_zero_based(v, "benchmark.cue.high_domains");
    fc.finish();
  }
  f.finish();
}

void parse_identification(const Json& j, IdentificationConfig& id) {
  Fields f(j, "identification");
  std::string s;
  if (f.get("strategy", s)) id.strategy.kind = parse_id_kind(s);
  if (const Json* l = f.find("layers")) {
    if (l->is_string()) {
      if (l->get<std::string>() != "search") throw ConfigError("expected a layer list or \"search\"", "identification.layers");
      id.search = true;
      id.strategy.mlfi.layers.clear();
    } else {
      std::vector<std::size_t> layers;
      if (!l->is_array()) throw ConfigError("expected a layer list or \"search\"", "identification.layers");
      for (const auto& e : *l) {
        if (!e.is_number_unsigned()) throw ConfigError("expected positive layer indices", "identification.layers");
        layers.push_back(e.get<std::size_t>());
      }
      id.search = false;
      id.strategy.mlfi.layers = layers;
    }
  }
  f.get("knn_k", id.strategy.knn_k);
  if (f.get("knn_metric", s)) id.strategy.knn_metric = parse_knn_metric(s);
  f.get("pss_seed", id.strategy.pss_seed, 0);
  f.get("kmeans_seed", id.strategy.kmeans_seed, 0);
  f.get("oracle", id.oracle);
  f.finish();
}

void parse_ablate(const Json& j, AblationGrid& a) {
  Fields f(j, "ablate");
  f.get("components", a.components);
  if (const Json* v = f.find("variants")) {
    if (!v->is_array()) throw ConfigError("expected an array of strings", "ablate.variants");
    a.variants.clear();
    for (const auto& e : *v) {
      if (!e.is_string()) throw ConfigError("expected an array of strings", "ablate.variants");
      try {
        a.variants.push_back(parse_struct_variant(e.get<std::string>()));
      } catch (const ConfigError& err) {
        throw ConfigError(err.what(), "ablate.variants");
      }
    }
  }
  if (const Json* v = f.find("lambdas")) {
    if (!v->is_array()) throw ConfigError("expected an array of numbers", "ablate.lambdas");
    a.lambdas.clear();
    for (const auto& e : *v) {
      if (!e.is_number()) throw ConfigError("expected an array of numbers", "ablate.lambdas");
      a.lambdas.push_back(e.get<double>());
    }
  }
  f.get("prompt_lengths", a.prompt_lengths);
  if (const Json* v = f.find("share")) {
    if (!v->is_array()) throw ConfigError("expected an array of booleans", "ablate.share");
    a.share.clear();
    for (const auto& e : *v) {
      if (!e.is_boolean()) throw ConfigError("expected an array of booleans", "ablate.share");
      a.share.push_back(e.get<bool>());
    }
  }
  if (const Json* v = f.find("orders")) {
    if (!v->is_array()) throw ConfigError("expected an array of domain orders", "ablate.orders");
    a.orders.clear();
    for (const auto& o : *v) {
      if (!o.is_array()) throw ConfigError("expected an array of domain orders", "ablate.orders");
      std::vector<std::size_t> order;
      for (const auto& e : o) {
        if (!e.is_number_unsigned()) throw ConfigError("expected 1-based domain indices", "ablate.orders");
        order.push_back(e.get<std::size_t>());
      }
      a.orders.push_back(order);
    }
  }
  f.finish();
}

void validate_order(const std::vector<std::size_t>& order, std::size_t domains, const std::string& field) {
  if (order.empty()) return;
  if (order.size() != domains) throw ConfigError("must list each of the " + std::to_string(domains) + " domains once", field);
  std::vector<bool> seen(domains, false);
  for (std::size_t x : order) {
    if (x < 1 || x > domains || seen[x - 1]) throw ConfigError("not a permutation of 1.." + std::to_string(domains), field);
    seen[x - 1] = true;
  }
}

}  // namespace

void ExperimentConfig::resolve() {
  if (!benchmark_seed_set) benchmark.seed = mix_seed(seed, 1);
  if (!backbone_seed_set) backbone.seed = mix_seed(seed, 2);
  benchmark_seed_set = backbone_seed_set = true;
  if (!features) {
    backbone.hidden_dim = benchmark.dim;
    backbone.patch_count = benchmark.patch_count;
    benchmark.validate();
  } else if (features->files.empty()) {
    throw ConfigError("needs at least one feature file", "features.files");
  } else if (features->anchors.empty()) {
    throw ConfigError("needs an anchor file", "features.anchors");
  }
  backbone.validate();
  model.backbone = backbone;
  model.validate();
  optimizer.validate();
  const std::size_t domains = features ? features->files.size() : benchmark.domains;
  validate_order(domain_order, domains, "domain_order");
  for (std::size_t k = 0; k < ablate.orders.size(); ++k) validate_order(ablate.orders[k], domains, "ablate.orders");
  if (identification.strategy.kind == IdKind::mlfi && !identification.search) {
    if (identification.strategy.mlfi.layers.empty()) identification.strategy.mlfi.layers = {backbone.depth};
    identification.strategy.mlfi = identification.strategy.mlfi.normalized(backbone.depth);
  }
  if (identification.strategy.kind == IdKind::knn && identification.strategy.knn_k < 1) {
    throw ConfigError("must be at least 1", "identification.knn_k");
  }
  for (double l : ablate.lambdas)
    if (!(l >= 0.0)) throw ConfigError("must be non-negative", "ablate.lambdas");
}

ExperimentConfig parse_experiment_config(const Json& j) {
  ExperimentConfig cfg;
  Fields f(j, "");
  f.get("seed", cfg.seed, 0);
  f.get("output_dir", cfg.output_dir);
  f.get("domain_order", cfg.domain_order);
  if (const Json* b = f.find("benchmark")) parse_benchmark(*b, cfg.benchmark, cfg.benchmark_seed_set);
  if (const Json* fe = f.find("features")) {
    Fields ff(*fe, "features");
    FeatureInput in;
    ff.get("anchors", in.anchors);
    if (const Json* files = ff.find("files")) {
      if (!files->is_array()) throw ConfigError("expected an array of paths", "features.files");
      for (const auto& p : *files) {
        if (!p.is_string()) throw ConfigError("expected an array of paths", "features.files");
        in.files.push_back(p.get<std::string>());
      }
    }
    ff.finish();
    cfg.features = in;
  }
  if (const Json* b = f.find("backbone")) {
    Fields fb(*b, "backbone");
    fb.get("depth", cfg.backbone.depth);
    fb.get("heads", cfg.backbone.heads);
    fb.get("mlp_ratio", cfg.backbone.mlp_ratio);
    cfg.backbone_seed_set = fb.get("seed", cfg.backbone.seed, 0);
    fb.finish();
  }
  if (const Json* m = f.find("model")) {
    Fields fm(*m, "model");
    fm.get("prompt_length", cfg.model.prompt_length);
    fm.get("share", cfg.model.share);
    fm.get("aggregation", cfg.model.aggregation);
    fm.get("prompt_init_std", cfg.model.prompt_init_std);
    fm.finish();
  }
  if (const Json* l = f.find("loss")) {
    Fields fl(*l, "loss");
    fl.get("tau", cfg.model.loss.tau);
    fl.get("lambda", cfg.model.loss.lambda);
    std::string v;
    if (fl.get("variant", v)) cfg.model.loss.variant = parse_struct_variant(v);
    fl.finish();
  }
  if (const Json* o = f.find("optimizer")) {
    Fields fo(*o, "optimizer");
    fo.get("lr0", cfg.optimizer.lr0);
    fo.get("beta1", cfg.optimizer.beta1);
    fo.get("beta2", cfg.optimizer.beta2);
    fo.get("eps", cfg.optimizer.eps);
    fo.get("weight_decay", cfg.optimizer.weight_decay);
    fo.get("epochs", cfg.optimizer.epochs);
    fo.get("batch_size", cfg.optimizer.batch_size);
    fo.finish();
  }
  if (const Json* i = f.find("identification")) parse_identification(*i, cfg.identification);
  if (const Json* a = f.find("ablate")) parse_ablate(*a, cfg.ablate);
  f.finish();
  cfg.resolve();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string(), "<config>");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), "<config>");
  }
  return parse_experiment_config(j);
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["domain_order"] = c.domain_order;
  if (c.features) {
    j["features"] = {{"anchors", c.features->anchors}, {"files", c.features->files}};
  } else {
    const BenchmarkConfig& b = c.benchmark;
    j["benchmark"] = {
        {"domains", b.domains},
        {"classes", b.classes},
        {"dim", b.dim},
        {"patch_count", b.patch_count},
        {"train_per_class", b.train_per_class},
        {"val_per_class", b.val_per_class},
        {"test_per_class", b.test_per_class},
        {"class_scale", b.class_scale},
        {"text_dim", b.text_dim},
        {"geometry_knob", b.geometry_knob},
        {"seed", b.seed},
        {"groups", {{"count", b.groups.groups}, {"intra", b.groups.intra}, {"inter", b.groups.inter}}},
        {"shift",
         {{"rotation_deg", b.shift.rotation_deg},
          {"translation", b.shift.translation},
          {"noise_sigma", b.shift.noise_sigma}}},
        {"cue",
         {{"enabled", b.cue.enabled},
          {"low_amplitude", b.cue.low_amplitude},
          {"high_scale", b.cue.high_scale},
          {"low_domains", to_one_based(b.cue.low_domains)},
          {"high_domains", to_one_based(b.cue.high_domains)}}},
    };
  }
  j["backbone"] = {{"depth", c.backbone.depth},
                   {"heads", c.backbone.heads},
                   {"mlp_ratio", c.backbone.mlp_ratio},
                   {"seed", c.backbone.seed}};
  j["model"] = {{"prompt_length", c.model.prompt_length},
                {"share", c.model.share},
                {"aggregation", c.model.aggregation},
                {"prompt_init_std", c.model.prompt_init_std}};
  j["loss"] = {{"tau", c.model.loss.tau},
               {"lambda", c.model.loss.lambda},
               {"variant", std::string(to_string(c.model.loss.variant))}};
  const OptimizerConfig& o = c.optimizer;
  j["optimizer"] = {{"lr0", o.lr0},       {"beta1", o.beta1},   {"beta2", o.beta2},
                    {"eps", o.eps},       {"weight_decay", o.weight_decay},
                    {"epochs", o.epochs}, {"batch_size", o.batch_size}};
  const IdStrategy& s = c.identification.strategy;
  Json id;
  id["strategy"] = to_string(s.kind);
  if (c.identification.search) {
    id["layers"] = "search";
  } else {
    id["layers"] = s.mlfi.layers;
  }
  id["knn_k"] = s.knn_k;
  id["knn_metric"] = to_string(s.knn_metric);
  id["pss_seed"] = s.pss_seed;
  id["kmeans_seed"] = s.kmeans_seed;
  id["oracle"] = c.identification.oracle;
  j["identification"] = id;
  Json a;
  a["components"] = c.ablate.components;
  a["variants"] = Json::array();
  for (auto v : c.ablate.variants) a["variants"].push_back(std::string(to_string(v)));
  a["lambdas"] = c.ablate.lambdas;
  a["prompt_lengths"] = c.ablate.prompt_lengths;
  a["share"] = c.ablate.share;
  a["orders"] = c.ablate.orders;
  j["ablate"] = a;
  return j;
}

void apply_override(Json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override must look like key=value", assignment);
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("empty path component", key);
    if (!node->is_object()) throw ConfigError("cannot descend into a non-object", key);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = Json::object();
    start = dot + 1;
  }
}

PreparedData prepare_data(const ExperimentConfig& cfg) {
  std::vector<DomainDataset> domains;
  std::optional<TextAnchorSet> text;
  if (cfg.features) {
    text = load_text_anchors(cfg.features->anchors);
    for (std::size_t k = 0; k < cfg.features->files.size(); ++k) {
      DomainDataset d = load_feature_dataset(cfg.features->files[k], text->count());
      d.domain_id = k;
      domains.push_back(std::move(d));
    }
  } else {
    Benchmark b = generate_benchmark(cfg.benchmark);
    domains = std::move(b.domains);
    text = std::move(b.text);
  }
  std::vector<std::size_t> order(domains.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!cfg.domain_order.empty()) order = to_zero_based(cfg.domain_order, "domain_order");
  PreparedData out{permute_domain_order(std::move(domains), order), std::move(*text), order};
  return out;
}

std::vector<LayerFeatureCache> feature_caches(const Backbone& backbone, const std::vector<DomainDataset>& domains,
                                              const std::string& split) {
  std::vector<LayerFeatureCache> out;
  for (const auto& d : domains) {
    const auto& samples = split == "train" ? d.train : split == "val" ? d.val : d.test;
    out.emplace_back(backbone, samples, d.bypass_stem);
  }
  return out;
}

EvalResult evaluate_stream(const LavaModel& model, const PrototypeBank& bank, const std::vector<DomainDataset>& domains,
                           const std::vector<LayerFeatureCache>& test_features, bool oracle) {
  const std::size_t T = model.domain_count();
  if (T == 0 || domains.size() < T || test_features.size() < T) throw StateError("evaluation needs a trained model and its test sets");
  if (!oracle && bank.domain_count() < T) throw StateError("prototype bank does not cover every trained domain");
  EvalResult r{AccuracyMatrix(T), std::nullopt, {}, {}};
  r.predictions.resize(T);
  for (std::size_t j = 0; j < T; ++j) {
    for (std::size_t i = 0; i <= j; ++i) {
      const auto& test = domains[i].test;
      std::size_t correct = 0;
      std::vector<std::size_t> preds, routes;
      for (std::size_t n = 0; n < test.size(); ++n) {
        const std::size_t s = oracle ? i : bank.identify(bank.test_feature(test_features[i], n), j + 1);
        const std::size_t y = model.predict(test[n], s, domains[i].bypass_stem);
        if (y == test[n].label) ++correct;
        preds.push_back(y);
        routes.push_back(s);
      }
      r.matrix.set(j, i, correct, test.size());
      r.predictions[j].push_back(std::move(preds));
      if (j + 1 == T) r.routes.push_back(std::move(routes));
    }
  }
  std::size_t routed = 0, total = 0;
  for (std::size_t i = 0; i < T; ++i) {
    for (std::size_t s : r.routes[i]) routed += (s == i);
    total += r.routes[i].size();
  }
  r.id_accuracy = static_cast<double>(routed) / static_cast<double>(total);
  return r;
}

ModelConfig model_config_for(const ExperimentConfig& cfg, const PreparedData& data) {
  ModelConfig m = cfg.model;
  m.backbone = cfg.backbone;
  if (!data.domains.empty()) {
    const Matrix& tokens = data.domains.front().train.front().tokens;
    m.backbone.hidden_dim = tokens.cols();
    if (data.domains.front().bypass_stem) m.backbone.patch_count = std::max<std::size_t>(1, tokens.rows());
  }
  return m;
}

RunResult run_training(const ExperimentConfig& cfg, const PreparedData& data, const StageHook& hook) {
  LavaModel model(model_config_for(cfg, data), data.text);
  RunResult run{std::move(model), PrototypeBank(), {}, {}, {}, std::nullopt};
  IdStrategy strategy = cfg.identification.strategy;
  if (strategy.kind == IdKind::mlfi && cfg.identification.search) {
    const Backbone& bb = run.model.backbone();
    const auto train = feature_caches(bb, data.domains, "train");
    const auto val = feature_caches(bb, data.domains, "val");
    run.search = greedy_layer_search(train, val);
    strategy.mlfi.layers = run.search->best_layers;
  }
  run.bank = PrototypeBank(strategy, run.model.backbone().depth());
  for (std::size_t t = 0; t < data.domains.size(); ++t) {
    const DomainDataset& d = data.domains[t];
    run.model.add_domain(cfg.seed, d.domain_id);
    run.initial_struct.push_back(evaluate_objective(run.model, t, d.train, d.bypass_stem).l_struct);
    run.logs.push_back(train_domain(run.model, t, d, cfg.optimizer));
    run.final_struct.push_back(evaluate_objective(run.model, t, d.train, d.bypass_stem).l_struct);
    freeze_domain(run.model, t);
    run.bank.add_domain(run.model.backbone(), d);
    if (hook) hook(run.model, run.bank, t);
  }
  return run;
}

Json matrix_json(const Matrix& m) {
  return Json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.values().begin(), m.values().end())}};
}

Matrix matrix_from_json(const Json& j, const std::string& field) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
    throw FormatError("checkpoint field " + field + " is not a matrix");
  }
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) throw FormatError("checkpoint field " + field + " has the wrong element count");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.values().begin());
  return m;
}

Json checkpoint_json(const ExperimentConfig& cfg, const PreparedData& data, const RunResult& run) {
  Json j;
  j["format"] = "lava-checkpoint";
  j["version"] = 1;
  j["config"] = to_json(cfg);
  const BackboneConfig& b = run.model.backbone().config();
  j["backbone"] = {{"depth", b.depth},     {"hidden_dim", b.hidden_dim},   {"heads", b.heads},
                   {"mlp_ratio", b.mlp_ratio}, {"patch_count", b.patch_count}, {"seed", b.seed}};
  const TextAnchorSet& text = run.model.text();
  j["classes"] = text.class_names();
  j["text_anchors"] = {{"encoder", text.encoder()},
                       {"source", text.source() == AnchorSource::file ? "file" : "synthetic"},
                       {"anchors", matrix_json(text.anchors())}};
  j["domain_order"] = to_one_based(data.order);
  j["domains"] = Json::array();
  for (std::size_t t = 0; t < run.model.domain_count(); ++t) {
    const DomainModelState& s = run.model.domain(t);
    Json d;
    d["domain"] = t + 1;
    d["dataset"] = data.domains[t].name;
    d["init_seed"] = s.init_seed;
    d["trained"] = s.trained;
    d["frozen"] = s.frozen;
    d["prompt"] = matrix_json(s.prompt.tokens);
    d["visual_anchors"] = matrix_json(s.visual.anchors);
    if (s.prototypes) d["prototype_anchors"] = matrix_json(s.prototypes->prototypes);
    d["classifier"] = {{"weight", matrix_json(s.classifier.weight)}, {"bias", matrix_json(s.classifier.bias)}};
    j["domains"].push_back(d);
  }
  const IdStrategy& st = run.bank.strategy();
  Json bank;
  bank["strategy"] = to_string(st.kind);
  bank["layers"] = run.bank.layers();
  bank["knn_k"] = st.knn_k;
  bank["knn_metric"] = to_string(st.knn_metric);
  bank["entries"] = Json::array();
  for (const auto& e : run.bank.entries())
    bank["entries"].push_back({{"domain", e.domain + 1}, {"count", e.count}, {"mu", e.mu}});
  j["identification"] = bank;
  return j;
}

std::string serialize_checkpoint(const ExperimentConfig& cfg, const PreparedData& data, const RunResult& run) {
  return checkpoint_json(cfg, data, run).dump(1) + "\n";
}

LoadedCheckpoint parse_checkpoint(const Json& j) {
  try {
    if (j.value("format", "") != "lava-checkpoint") throw FormatError("not a lava checkpoint");
    if (j.value("version", 0) != 1) throw FormatError("unsupported checkpoint version");
    ExperimentConfig cfg = parse_experiment_config(j.at("config"));
    const Json& jb = j.at("backbone");
    BackboneConfig b;
    b.depth = jb.at("depth").get<std::size_t>();
    b.hidden_dim = jb.at("hidden_dim").get<std::size_t>();
    b.heads = jb.at("heads").get<std::size_t>();
    b.mlp_ratio = jb.at("mlp_ratio").get<double>();
    b.patch_count = jb.at("patch_count").get<std::size_t>();
    b.seed = jb.at("seed").get<std::uint64_t>();
    ModelConfig mc = cfg.model;
    mc.backbone = b;
    const Json& jt = j.at("text_anchors");
    TextAnchorSet text(matrix_from_json(jt.at("anchors"), "text_anchors.anchors"),
                       j.at("classes").get<std::vector<std::string>>(),
                       jt.at("source").get<std::string>() == "file" ? AnchorSource::file : AnchorSource::synthetic,
                       jt.at("encoder").get<std::string>());
    LavaModel model(mc, std::move(text));
    for (const Json& d : j.at("domains")) {
      DomainModelState s;
      s.domain = d.at("domain").get<std::size_t>() - 1;
      s.init_seed = d.at("init_seed").get<std::uint64_t>();
      s.trained = d.at("trained").get<bool>();
      s.frozen = d.at("frozen").get<bool>();
      s.prompt = PromptTokens{matrix_from_json(d.at("prompt"), "prompt"), s.frozen};
      s.visual = VisualAnchorSet{matrix_from_json(d.at("visual_anchors"), "visual_anchors"), s.domain, s.frozen};
      if (d.contains("prototype_anchors")) {
        s.prototypes = PrototypeAnchorSet{matrix_from_json(d.at("prototype_anchors"), "prototype_anchors"), s.domain, s.frozen};
      }
      s.classifier.weight = matrix_from_json(d.at("classifier").at("weight"), "classifier.weight");
      s.classifier.bias = matrix_from_json(d.at("classifier").at("bias"), "classifier.bias");
      s.classifier.frozen = s.frozen;
      model.push_domain(std::move(s));
    }
    const Json& jb2 = j.at("identification");
    IdStrategy st = cfg.identification.strategy;
    st.kind = parse_id_kind(jb2.at("strategy").get<std::string>());
    st.knn_k = jb2.at("knn_k").get<std::size_t>();
    st.knn_metric = parse_knn_metric(jb2.at("knn_metric").get<std::string>());
    if (st.kind == IdKind::mlfi) st.mlfi.layers = jb2.at("layers").get<std::vector<std::size_t>>();
    PrototypeBank bank(st, b.depth);
    for (const Json& e : jb2.at("entries")) {
      bank.push_entry({e.at("mu").get<std::vector<double>>(), e.at("domain").get<std::size_t>() - 1,
                       e.at("count").get<std::size_t>()});
    }
    return LoadedCheckpoint{std::move(cfg), std::move(model), std::move(bank)};
  } catch (const Json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  return parse_checkpoint(j);
}

}  // namespace lava
