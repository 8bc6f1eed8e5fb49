// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "lava/matrix.hpp"

namespace lava {

enum class AnchorSource { file, synthetic };
enum class AnchorTag { text, visual, global_keys };

/// Cosine similarities of one vector against every row of an anchor set.
struct RelativeEncoding {
  std::vector<double> values;
  AnchorTag tag = AnchorTag::text;
  std::size_t size() const noexcept { return values.size(); }
};

/// Frozen class-name anchors A^Text (N_c x D_l), rows unit-normalized. Row
/// order is the class index map used by every pool and classifier.
class TextAnchorSet {
 public:
  /// Normalizes rows; rejects duplicate names and zero rows.
  TextAnchorSet(Matrix embeddings, std::vector<std::string> class_names, AnchorSource source,
                std::string encoder = {});

  std::size_t count() const noexcept { return anchors_.rows(); }
  std::size_t dim() const noexcept { return anchors_.cols(); }
  const Matrix& anchors() const noexcept { return anchors_; }
  const std::vector<std::string>& class_names() const noexcept { return names_; }
  AnchorSource source() const noexcept { return source_; }
  const std::string& encoder() const noexcept { return encoder_; }

  /// Pairwise cosines of the anchors; row y is the reference encoding r^y.
  const Matrix& gram() const noexcept { return gram_; }

  /// FNV-1a over names and anchor bytes.
  std::uint64_t fingerprint() const;

 private:
  Matrix anchors_;
  std::vector<std::string> names_;
  AnchorSource source_;
  std::string encoder_;
  Matrix gram_;
};

/// JSON Lines: header {"dim","count","encoder"}, then one
/// {"class": name, "embedding": [...]} per class, in class order.
TextAnchorSet parse_text_anchors(std::istream& in);
TextAnchorSet load_text_anchors(const std::filesystem::path& path);
/// Writes the anchors as stored (normalized) at round-trip precision.
void write_text_anchors(std::ostream& out, const TextAnchorSet& anchors);

/// Classes are split into `groups` contiguous blocks. Same-group pairs target
/// cosine `intra`, cross-group pairs `inter`.
struct GroupStructure {
  std::size_t groups = 1;
  double intra = 0.0;
  double inter = 0.0;

  Matrix target_gram(std::size_t n_classes) const;
  std::size_t group_of(std::size_t cls, std::size_t n_classes) const;
};

/// Unit vectors whose pairwise cosines realize `structure` (within 0.05).
/// Throws GenerationError when the target is infeasible in `dim` dimensions.
TextAnchorSet synth_text_anchors(std::size_t n_classes, std::size_t dim, const GroupStructure& structure,
                                 std::uint64_t seed);

/// Rows whose cosine Gram equals `gram` exactly (up to rounding), embedded
/// in `dim` dimensions with a seeded random rotation.
Matrix realize_gram(const Matrix& gram, std::size_t dim, std::uint64_t seed);

/// Entry c = cosine(v, anchors[c]).
RelativeEncoding relative_encoding(std::span<const double> v, const Matrix& anchors,
                                   AnchorTag tag = AnchorTag::text);

/// r^y = relative_encoding(A^Text[label], A^Text), served from the cached Gram.
std::span<const double> reference_encoding(std::size_t label, const TextAnchorSet& anchors);

}  // namespace lava
