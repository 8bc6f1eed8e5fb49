// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lava/matrix.hpp"
#include "lava/text_anchor.hpp"

namespace lava {

/// One input: a grid of patch tokens (patch_count x D) and its class.
struct Sample {
  Matrix tokens;
  std::size_t label = 0;
};

/// Train / validation / test splits for one domain. All domains share the
/// same label space.
struct DomainDataset {
  std::size_t domain_id = 0;  // identity of the generated domain, stable under reordering
  std::string name;
  std::size_t classes = 0;
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
  /// Samples are pre-extracted features used without positional encodings.
  bool bypass_stem = false;
};

struct DomainShift {
  double rotation_deg = 30.0;   // angle of the per-domain orthogonal transform
  double translation = 0.5;     // norm of the per-domain mean offset
  double noise_sigma = 1.0;     // per-entry Gaussian patch noise
};

/// Injects domain cues whose visibility depends on encoder depth: an offset
/// shared by every patch (visible from the first layer) for domains listed in
/// `low_domains`, and a rescaling of every embedded patch token (content plus
/// stem position) by `high_scale` for domains listed in `high_domains`. The
/// first block only sees patches through per-token LayerNorm, which cancels
/// the rescaling; later blocks see it through the residual stream. The
/// default four-domain layout is none, low, high, both. The offset stays
/// in the residual stream, so deeper layers read both cues.
struct ComplementaryCue {
  bool enabled = false;
  double low_amplitude = 2.0;
  double high_scale = 0.1;
  std::vector<std::size_t> low_domains = {1, 3};
  std::vector<std::size_t> high_domains = {2, 3};
};

struct BenchmarkConfig {
  std::size_t domains = 4;
  std::size_t classes = 8;
  std::size_t dim = 64;
  std::size_t patch_count = 16;
  std::size_t train_per_class = 16;
  std::size_t val_per_class = 4;
  std::size_t test_per_class = 16;
  double class_scale = 1.0;        // norm of the class-mean direction in every patch
  GroupStructure groups{2, 0.5, 0.0};
  std::size_t text_dim = 32;       // width of the synthetic text anchors
  DomainShift shift;
  double geometry_knob = 1.0;      // 1: shared class geometry, 0: independent per domain
  ComplementaryCue cue;
  std::uint64_t seed = 0;

  void validate() const;
};

struct Benchmark {
  std::vector<DomainDataset> domains;
  TextAnchorSet text;
  /// Per-domain class means (N_c x D) before the shared domain offset, in
  /// generation order. Their cosine Gram is the domain's class geometry.
  std::vector<Matrix> class_means;
  /// Per-domain offset added to every patch (1 x D).
  std::vector<Matrix> offsets;
};

/// Throws GenerationError for infeasible geometry (e.g. N_c > D).
Benchmark generate_benchmark(const BenchmarkConfig& cfg);

/// Reorders the stream: position k receives datasets[order[k]] (0-based).
std::vector<DomainDataset> permute_domain_order(std::vector<DomainDataset> datasets,
                                                std::span<const std::size_t> order);
/// Inverse of a 0-based permutation; throws ContractViolation when invalid.
std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> order);

/// Feature JSON Lines: header {"dim","count","domain"}, then per sample
/// {"label": int, "feature": [...]} with optional "split" ("train", "val"
/// or "test"; default "train"). Labels are validated against `classes`.
DomainDataset parse_feature_dataset(std::istream& in, std::size_t classes);
DomainDataset load_feature_dataset(const std::filesystem::path& path, std::size_t classes);
void write_feature_dataset(std::ostream& out, const DomainDataset& data);

/// Frobenius norm of the difference between two class-mean cosine Grams.
double gram_disagreement(const Matrix& means_a, const Matrix& means_b);

}  // namespace lava
