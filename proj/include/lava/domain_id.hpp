// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lava/backbone.hpp"
#include "lava/datagen.hpp"

namespace lava {

/// Layer set used for identification (1-based tap indices).
struct MLFIConfig {
  std::vector<std::size_t> layers;

  /// Sorted, de-duplicated copy. Throws ConfigError for an empty set or a
  /// layer outside [1, depth].
  MLFIConfig normalized(std::size_t depth) const;
};

/// Per-layer class-token states for every sample of one split, computed
/// once on the unprompted sequence [cls; x_emb].
class LayerFeatureCache {
 public:
  LayerFeatureCache() = default;
  LayerFeatureCache(const Backbone& backbone, const std::vector<Sample>& samples, bool bypass_stem);
  /// Wraps precomputed per-sample depth x D state matrices.
  explicit LayerFeatureCache(std::vector<Matrix> states);

  std::size_t size() const noexcept { return states_.size(); }
  std::size_t depth() const noexcept { return depth_; }
  std::size_t dim() const noexcept { return dim_; }
  /// depth x D matrix; row l-1 holds f^(l).
  const Matrix& states(std::size_t i) const { return states_.at(i); }
  /// Concatenation of f^(l) for l in `layers` (already normalized).
  std::vector<double> feature(std::size_t i, std::span<const std::size_t> layers) const;

 private:
  std::vector<Matrix> states_;
  std::size_t depth_ = 0;
  std::size_t dim_ = 0;
};

/// F(x): concatenated per-layer class-token states in ascending layer order.
std::vector<double> multi_level_feature(const Backbone& backbone, const Matrix& tokens, const MLFIConfig& cfg,
                                        bool bypass_stem = false);

/// Row-order mean; shared by every prototype builder so degenerate cases
/// (one cluster, one layer) agree bitwise.
std::vector<double> mean_feature(std::span<const std::vector<double>> features);

struct DomainPrototype {
  std::vector<double> mu;
  std::size_t domain = 0;
  std::size_t count = 0;
};

DomainPrototype build_prototype(std::size_t domain, std::span<const std::vector<double>> features);

enum class IdKind { mlfi, nmc, knn, pss };
enum class KnnMetric { cosine, l2 };

std::string to_string(IdKind kind);
IdKind parse_id_kind(const std::string& text);
std::string to_string(KnnMetric metric);
KnnMetric parse_knn_metric(const std::string& text);

struct IdStrategy {
  IdKind kind = IdKind::mlfi;
  MLFIConfig mlfi;             // MLFI only
  std::size_t knn_k = 5;       // KNN centroids per domain
  KnnMetric knn_metric = KnnMetric::cosine;
  std::uint64_t pss_seed = 0;  // PSS shuffle seed
  std::uint64_t kmeans_seed = 0;
};

/// Layers the strategy reads (NMC, KNN and PSS use the final layer).
std::vector<std::size_t> strategy_layers(const IdStrategy& strategy, std::size_t depth);

/// Lloyd's K-means with seeded initialization; centroids are means of their
/// members. Throws ConfigError when k is 0 or exceeds the point count.
std::vector<std::vector<double>> kmeans(std::span<const std::vector<double>> points, std::size_t k,
                                        KnnMetric metric, std::uint64_t seed, std::size_t max_iter = 50);

/// Prototype bank: one or more entries per domain, in domain order.
class PrototypeBank {
 public:
  PrototypeBank() = default;
  explicit PrototypeBank(IdStrategy strategy, std::size_t depth);

  const IdStrategy& strategy() const noexcept { return strategy_; }
  const std::vector<std::size_t>& layers() const noexcept { return layers_; }
  const std::vector<DomainPrototype>& entries() const noexcept { return entries_; }
  std::size_t domain_count() const noexcept { return domains_; }

  /// Adds the prototypes for the next domain from its training split.
  void add_domain(const Backbone& backbone, const DomainDataset& data);
  /// Same, from precomputed features (no PSS shuffling applied).
  void add_domain_features(std::size_t domain, std::span<const std::vector<double>> features);
  void push_entry(DomainPrototype entry);

  /// Domain index (0-based) for an identification feature, considering only
  /// the first `visible` domains (all when 0).
  std::size_t identify(std::span<const double> feature, std::size_t visible = 0) const;
  /// Feature for a test sample under this bank's strategy (never shuffled).
  std::vector<double> test_feature(const LayerFeatureCache& cache, std::size_t i) const;

 private:
  IdStrategy strategy_;
  std::vector<std::size_t> layers_;
  std::vector<DomainPrototype> entries_;
  std::size_t domains_ = 0;
};

/// Domain of the bank entry with the highest cosine; lowest domain wins ties.
std::size_t identify_cosine(std::span<const double> feature, std::span<const DomainPrototype> bank);
/// Same, restricted to entries whose domain is below `visible`.
std::size_t identify_cosine(std::span<const double> feature, std::span<const DomainPrototype> bank, std::size_t visible);

/// Fraction of samples routed to their true domain.
double identification_accuracy(const PrototypeBank& bank, std::span<const LayerFeatureCache> test_sets);

struct LayerCandidate {
  std::vector<std::size_t> layers;
  double accuracy = 0.0;
  bool accepted = false;
};

struct LayerSearchReport {
  std::vector<double> single_layer_accuracy;  // index l-1
  std::vector<std::size_t> ranking;           // layers, best first
  std::vector<LayerCandidate> candidates;     // combinations tried, in order
  std::vector<std::size_t> best_layers;
  double best_accuracy = 0.0;

  std::string to_json() const;
};

/// Domain-ID accuracy on `val` for an MLFI bank built from `train`.
double mlfi_accuracy(std::span<const LayerFeatureCache> train, std::span<const LayerFeatureCache> val,
                     std::span<const std::size_t> layers);

/// Ranks single layers, then tries combinations of size 2..max_size drawn
/// from the top `pool` layers, keeping a candidate only when it strictly
/// improves validation accuracy.
LayerSearchReport greedy_layer_search(std::span<const LayerFeatureCache> train,
                                      std::span<const LayerFeatureCache> val, std::size_t pool = 5,
                                      std::size_t max_size = 3);

}  // namespace lava
