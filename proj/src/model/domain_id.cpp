// SPDX-License-Identifier: Apache-2.0
#include "lava/domain_id.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "lava/error.hpp"
#include "lava/numerics.hpp"

namespace lava {

MLFIConfig MLFIConfig::normalized(std::size_t depth) const {
  if (layers.empty()) throw ConfigError("layer set is empty", "identification.layers");
  MLFIConfig out{layers};
  std::sort(out.layers.begin(), out.layers.end());
  out.layers.erase(std::unique(out.layers.begin(), out.layers.end()), out.layers.end());
  for (std::size_t l : out.layers) {
    if (l < 1 || l > depth) {
      throw ConfigError("layer " + std::to_string(l) + " outside [1, " + std::to_string(depth) + "]",
                        "identification.layers");
    }
  }
  return out;
}

namespace {

Matrix unprompted_states(const Backbone& backbone, const Matrix& tokens, bool bypass_stem) {
  const Matrix seq = backbone.build_prompted_sequence(backbone.embed_patches(tokens, bypass_stem), Matrix(0, backbone.dim()));
  std::vector<std::size_t> all(backbone.depth());
  std::iota(all.begin(), all.end(), std::size_t{1});
  const auto taps = backbone.encode_with_taps(seq, all);
  Matrix states(backbone.depth(), backbone.dim());
  for (std::size_t l = 0; l < taps.size(); ++l) std::copy(taps[l].values().begin(), taps[l].values().end(), states.row(l).begin());
  return states;
}

}  // namespace

LayerFeatureCache::LayerFeatureCache(const Backbone& backbone, const std::vector<Sample>& samples, bool bypass_stem)
    : depth_(backbone.depth()), dim_(backbone.dim()) {
  states_.reserve(samples.size());
  for (const Sample& s : samples) states_.push_back(unprompted_states(backbone, s.tokens, bypass_stem));
}

LayerFeatureCache::LayerFeatureCache(std::vector<Matrix> states) : states_(std::move(states)) {
  if (states_.empty()) return;
  depth_ = states_.front().rows();
  dim_ = states_.front().cols();
  for (const Matrix& m : states_) {
    if (m.rows() != depth_ || m.cols() != dim_) throw ContractViolation("layer cache: inconsistent state shapes");
  }
}

std::vector<double> LayerFeatureCache::feature(std::size_t i, std::span<const std::size_t> layers) const {
  const Matrix& st = states_.at(i);
  std::vector<double> out;
  out.reserve(layers.size() * dim_);
  for (std::size_t l : layers) {
    if (l < 1 || l > depth_) throw ConfigError("layer " + std::to_string(l) + " out of range", "identification.layers");
    out.insert(out.end(), st.row(l - 1).begin(), st.row(l - 1).end());
  }
  return out;
}

std::vector<double> multi_level_feature(const Backbone& backbone, const Matrix& tokens, const MLFIConfig& cfg,
                                        bool bypass_stem) {
  const MLFIConfig norm = cfg.normalized(backbone.depth());
  const Matrix seq = backbone.build_prompted_sequence(backbone.embed_patches(tokens, bypass_stem), Matrix(0, backbone.dim()));
  const auto taps = backbone.encode_with_taps(seq, norm.layers);
  std::vector<double> out;
  out.reserve(norm.layers.size() * backbone.dim());
  for (const Matrix& m : taps) out.insert(out.end(), m.values().begin(), m.values().end());
  return out;
}

std::vector<double> mean_feature(std::span<const std::vector<double>> features) {
  if (features.empty()) throw ContractViolation("mean of an empty feature set");
  std::vector<double> mu(features.front().size(), 0.0);
  for (const auto& f : features) {
    if (f.size() != mu.size()) throw ContractViolation("feature length mismatch");
    for (std::size_t i = 0; i < mu.size(); ++i) mu[i] += f[i];
  }
  const double n = static_cast<double>(features.size());
  for (double& v : mu) v /= n;
  return mu;
}

DomainPrototype build_prototype(std::size_t domain, std::span<const std::vector<double>> features) {
  if (features.empty()) throw ContractViolation("build_prototype: empty training set");
  return {mean_feature(features), domain, features.size()};
}

std::string to_string(IdKind kind) {
  switch (kind) {
    case IdKind::mlfi: return "mlfi";
    case IdKind::nmc: return "nmc";
    case IdKind::knn: return "knn";
    case IdKind::pss: return "pss";
  }
  return "?";
}

IdKind parse_id_kind(const std::string& text) {
  if (text == "mlfi") return IdKind::mlfi;
  if (text == "nmc") return IdKind::nmc;
  if (text == "knn") return IdKind::knn;
  if (text == "pss") return IdKind::pss;
  throw ConfigError("unknown strategy '" + text + "'", "identification.strategy");
}

std::string to_string(KnnMetric metric) { return metric == KnnMetric::cosine ? "cosine" : "l2"; }

KnnMetric parse_knn_metric(const std::string& text) {
  if (text == "cosine") return KnnMetric::cosine;
  if (text == "l2") return KnnMetric::l2;
  throw ConfigError("unknown metric '" + text + "'", "identification.knn_metric");
}

std::vector<std::size_t> strategy_layers(const IdStrategy& strategy, std::size_t depth) {
  if (strategy.kind == IdKind::mlfi) return strategy.mlfi.normalized(depth).layers;
  return {depth};
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

// Higher is closer.
double closeness(std::span<const double> a, std::span<const double> b, KnnMetric metric) {
  return metric == KnnMetric::cosine ? cosine_similarity(a, b) : -squared_distance(a, b);
}

}  // namespace

std::vector<std::vector<double>> kmeans(std::span<const std::vector<double>> points, std::size_t k, KnnMetric metric,
                                        std::uint64_t seed, std::size_t max_iter) {
  if (k < 1) throw ConfigError("K must be at least 1", "identification.knn_k");
  if (k > points.size()) {
    throw ConfigError("K=" + std::to_string(k) + " exceeds the " + std::to_string(points.size()) + " training samples",
                      "identification.knn_k");
  }
  Rng rng(seed);
  const auto perm = rng.permutation(points.size());
  std::vector<std::vector<double>> centroids;
  for (std::size_t c = 0; c < k; ++c) centroids.push_back(points[perm[c]]);
  std::vector<std::size_t> assign(points.size(), k);
  for (std::size_t it = 0; it < max_iter; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::size_t best = 0;
      double best_v = closeness(points[i], centroids[0], metric);
      for (std::size_t c = 1; c < k; ++c) {
        const double v = closeness(points[i], centroids[c], metric);
        if (v > best_v) {
          best_v = v;
          best = c;
        }
      }
      if (assign[i] != best) {
        assign[i] = best;
        changed = true;
      }
    }
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<std::vector<double>> members;
      for (std::size_t i = 0; i < points.size(); ++i)
        if (assign[i] == c) members.push_back(points[i]);
      if (!members.empty()) centroids[c] = mean_feature(members);  // empty clusters keep their centroid
    }
    if (!changed) break;
  }
  return centroids;
}

PrototypeBank::PrototypeBank(IdStrategy strategy, std::size_t depth)
    : strategy_(std::move(strategy)), layers_(strategy_layers(strategy_, depth)) {
  if (strategy_.kind == IdKind::mlfi) strategy_.mlfi.layers = layers_;
}

void PrototypeBank::add_domain(const Backbone& backbone, const DomainDataset& data) {
  if (data.train.empty()) throw ContractViolation("prototype bank: empty training set");
  std::vector<std::vector<double>> feats;
  feats.reserve(data.train.size());
  const MLFIConfig cfg{layers_};
  for (std::size_t i = 0; i < data.train.size(); ++i) {
    const Sample& s = data.train[i];
    if (strategy_.kind == IdKind::pss) {
      const Matrix shuffled = patch_shuffle(s.tokens, mix_seed(strategy_.pss_seed, mix_seed(domains_, i)));
      feats.push_back(multi_level_feature(backbone, shuffled, cfg, data.bypass_stem));
    } else {
      feats.push_back(multi_level_feature(backbone, s.tokens, cfg, data.bypass_stem));
    }
  }
  add_domain_features(domains_, feats);
}

void PrototypeBank::add_domain_features(std::size_t domain, std::span<const std::vector<double>> features) {
  if (domain != domains_) throw StateError("prototype bank: domains must be added in order");
  if (features.empty()) throw ContractViolation("prototype bank: empty training set");
  if (strategy_.kind == IdKind::knn) {
    const auto centroids =
        kmeans(features, strategy_.knn_k, strategy_.knn_metric, mix_seed(strategy_.kmeans_seed, domain));
    for (const auto& c : centroids) entries_.push_back({c, domain, features.size()});
  } else {
    entries_.push_back(build_prototype(domain, features));
  }
  ++domains_;
}

void PrototypeBank::push_entry(DomainPrototype entry) {
  if (entry.domain + 1 == domains_) {
    entries_.push_back(std::move(entry));
  } else if (entry.domain == domains_) {
    entries_.push_back(std::move(entry));
    ++domains_;
  } else {
    throw FormatError("prototype bank entries out of domain order");
  }
}

std::size_t identify_cosine(std::span<const double> feature, std::span<const DomainPrototype> bank) {
  return identify_cosine(feature, bank, std::numeric_limits<std::size_t>::max());
}

std::size_t identify_cosine(std::span<const double> feature, std::span<const DomainPrototype> bank, std::size_t visible) {
  if (bank.empty() || visible == 0) throw StateError("identify: empty prototype bank");
  std::size_t best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < bank.size() && bank[k].domain < visible; ++k) {
    const double v = cosine_similarity(feature, bank[k].mu);
    if (v > best_v) {
      best_v = v;
      best = k;
    }
  }
  return bank[best].domain;
}

std::size_t PrototypeBank::identify(std::span<const double> feature, std::size_t visible) const {
  if (entries_.empty()) throw StateError("identify: empty prototype bank");
  if (visible == 0 || visible > domains_) visible = domains_;
  if (strategy_.kind != IdKind::knn || strategy_.knn_metric == KnnMetric::cosine) {
    return identify_cosine(feature, entries_, visible);
  }
  std::size_t best = 0;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < entries_.size() && entries_[k].domain < visible; ++k) {
    const double v = -squared_distance(feature, entries_[k].mu);
    if (v > best_v) {
      best_v = v;
      best = k;
    }
  }
  return entries_[best].domain;
}

std::vector<double> PrototypeBank::test_feature(const LayerFeatureCache& cache, std::size_t i) const {
  return cache.feature(i, layers_);
}

double identification_accuracy(const PrototypeBank& bank, std::span<const LayerFeatureCache> test_sets) {
  std::size_t correct = 0, total = 0;
  for (std::size_t t = 0; t < test_sets.size(); ++t) {
    for (std::size_t i = 0; i < test_sets[t].size(); ++i) {
      if (bank.identify(bank.test_feature(test_sets[t], i)) == t) ++correct;
      ++total;
    }
  }
  if (total == 0) throw ConfigError("no evaluation samples", "identification");
  return static_cast<double>(correct) / static_cast<double>(total);
}

double mlfi_accuracy(std::span<const LayerFeatureCache> train, std::span<const LayerFeatureCache> val,
                     std::span<const std::size_t> layers) {
  if (train.empty() || train.size() != val.size()) throw ConfigError("need train and validation sets per domain", "identification");
  IdStrategy strategy;
  strategy.mlfi.layers.assign(layers.begin(), layers.end());
  PrototypeBank bank(strategy, train.front().depth());
  for (std::size_t t = 0; t < train.size(); ++t) {
    std::vector<std::vector<double>> feats;
    for (std::size_t i = 0; i < train[t].size(); ++i) feats.push_back(train[t].feature(i, bank.layers()));
    bank.add_domain_features(t, feats);
  }
  return identification_accuracy(bank, val);
}

LayerSearchReport greedy_layer_search(std::span<const LayerFeatureCache> train, std::span<const LayerFeatureCache> val,
                                      std::size_t pool, std::size_t max_size) {
  if (train.empty() || val.empty() ||
      std::all_of(val.begin(), val.end(), [](const auto& c) { return c.size() == 0; })) {
    throw ConfigError("layer search needs validation data", "identification.layers");
  }
  const std::size_t depth = train.front().depth();
  LayerSearchReport report;
  for (std::size_t l = 1; l <= depth; ++l) {
    const std::size_t one[] = {l};
    report.single_layer_accuracy.push_back(mlfi_accuracy(train, val, one));
  }
  report.ranking.resize(depth);
  std::iota(report.ranking.begin(), report.ranking.end(), std::size_t{1});
  std::stable_sort(report.ranking.begin(), report.ranking.end(), [&](std::size_t a, std::size_t b) {
    return report.single_layer_accuracy[a - 1] > report.single_layer_accuracy[b - 1];
  });
  report.best_layers = {report.ranking.front()};
  report.best_accuracy = report.single_layer_accuracy[report.ranking.front() - 1];

  const std::size_t top = std::min(pool, depth);
  std::vector<std::size_t> cand(report.ranking.begin(), report.ranking.begin() + static_cast<std::ptrdiff_t>(top));
  for (std::size_t size = 2; size <= std::min(max_size, top); ++size) {
    // Combinations of `size` indices into cand, lexicographic in rank order.
    std::vector<std::size_t> idx(size);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    while (true) {
      LayerCandidate c;
      for (std::size_t i : idx) c.layers.push_back(cand[i]);
      std::sort(c.layers.begin(), c.layers.end());
      c.accuracy = mlfi_accuracy(train, val, c.layers);
      if (c.accuracy > report.best_accuracy) {
        c.accepted = true;
        report.best_accuracy = c.accuracy;
        report.best_layers = c.layers;
      }
      report.candidates.push_back(std::move(c));
      std::size_t pos = size;
      while (pos > 0 && idx[pos - 1] == top - size + pos - 1) --pos;
      if (pos == 0) break;
      ++idx[pos - 1];
      for (std::size_t j = pos; j < size; ++j) idx[j] = idx[j - 1] + 1;
    }
  }
  return report;
}

std::string LayerSearchReport::to_json() const {
  nlohmann::ordered_json j;
  j["single_layer_accuracy"] = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < single_layer_accuracy.size(); ++l)
    j["single_layer_accuracy"].push_back({{"layer", l + 1}, {"accuracy", single_layer_accuracy[l]}});
  j["ranking"] = ranking;
  j["candidates"] = nlohmann::ordered_json::array();
  for (const auto& c : candidates)
    j["candidates"].push_back({{"layers", c.layers}, {"accuracy", c.accuracy}, {"accepted", c.accepted}});
  j["best_layers"] = best_layers;
  j["best_accuracy"] = best_accuracy;
  return j.dump(2) + "\n";
}

}  // namespace lava
