// SPDX-License-Identifier: Apache-2.0
#include "lava/text_anchor.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "lava/error.hpp"
#include "lava/numerics.hpp"

namespace lava {

namespace {

using Json = nlohmann::json;

Json parse_line(const std::string& line, std::size_t number) {
  try {
    return Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what(), number);
  }
}

template <typename T>
T field(const Json& obj, const char* key, std::size_t line) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw FormatError(std::string("missing field '") + key + "'", line);
  }
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw FormatError(std::string("field '") + key + "' has the wrong type", line);
  }
}

void warn_unknown_keys(const Json& obj, std::initializer_list<const char*> known, std::size_t line) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) warn("anchor file line " + std::to_string(line) + ": unknown key '" + item.key() + "'");
  }
}

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

TextAnchorSet::TextAnchorSet(Matrix embeddings, std::vector<std::string> class_names, AnchorSource source,
                             std::string encoder)
    : anchors_(std::move(embeddings)), names_(std::move(class_names)), source_(source), encoder_(std::move(encoder)) {
  if (names_.size() != anchors_.rows()) {
    throw ContractViolation("text anchors: " + std::to_string(names_.size()) + " names for " +
                            std::to_string(anchors_.rows()) + " embeddings");
  }
  if (anchors_.rows() == 0 || anchors_.cols() == 0) throw ContractViolation("text anchors: empty set");
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw FormatError("empty class name");
    if (!seen.insert(n).second) throw FormatError("duplicate class name '" + n + "'");
  }
  for (std::size_t r = 0; r < anchors_.rows(); ++r) {
    auto row = anchors_.row(r);
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    if (norm <= kEps) throw FormatError("zero embedding for class '" + names_[r] + "'");
    // already-unit rows are kept bit-exact so reloading a set is lossless
    if (std::abs(norm - 1.0) > 1e-15) {
      for (double& v : row) v /= norm;
    }
  }
  gram_ = cosine_gram(anchors_);
}

std::uint64_t TextAnchorSet::fingerprint() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& n : names_) h = fnv1a(h, n.data(), n.size() + 1);
  return fnv1a(h, anchors_.data(), anchors_.size() * sizeof(double));
}

TextAnchorSet parse_text_anchors(std::istream& in) {
  std::string line;
  std::size_t number = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++number;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw FormatError("empty anchor file");
  const Json header = parse_line(line, number);
  const auto dim = field<std::size_t>(header, "dim", number);
  const auto count = field<std::size_t>(header, "count", number);
  const auto encoder = field<std::string>(header, "encoder", number);
  warn_unknown_keys(header, {"dim", "count", "encoder"}, number);
  if (dim == 0 || count == 0) throw FormatError("header dim and count must be positive", number);

  Matrix embeddings(count, dim);
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (std::size_t c = 0; c < count; ++c) {
    if (!next_line()) {
      throw FormatError("expected " + std::to_string(count) + " anchors, found " + std::to_string(c), number);
    }
    const Json obj = parse_line(line, number);
    auto name = field<std::string>(obj, "class", number);
    const auto emb = field<std::vector<double>>(obj, "embedding", number);
    warn_unknown_keys(obj, {"class", "embedding"}, number);
    if (emb.size() != dim) {
      throw FormatError("embedding length " + std::to_string(emb.size()) + " != dim " + std::to_string(dim),
                        number);
    }
    if (!seen.insert(name).second) throw FormatError("duplicate class name '" + name + "'", number);
    std::copy(emb.begin(), emb.end(), embeddings.row(c).begin());
    names.push_back(std::move(name));
  }
  if (next_line()) throw FormatError("trailing content after " + std::to_string(count) + " anchors", number);
  return TextAnchorSet(std::move(embeddings), std::move(names), AnchorSource::file, encoder);
}

TextAnchorSet load_text_anchors(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open anchor file " + path.string());
  return parse_text_anchors(in);
}

void write_text_anchors(std::ostream& out, const TextAnchorSet& anchors) {
  Json header = {{"dim", anchors.dim()}, {"count", anchors.count()},
                 {"encoder", anchors.encoder().empty() ? std::string("synthetic") : anchors.encoder()}};
  out << header.dump() << '\n';
  for (std::size_t c = 0; c < anchors.count(); ++c) {
    const auto row = anchors.anchors().row(c);
    Json line = {{"class", anchors.class_names()[c]}, {"embedding", std::vector<double>(row.begin(), row.end())}};
    out << line.dump() << '\n';
  }
}

std::size_t GroupStructure::group_of(std::size_t cls, std::size_t n_classes) const {
  const std::size_t g = std::max<std::size_t>(1, groups);
  return cls * g / n_classes;
}

Matrix GroupStructure::target_gram(std::size_t n_classes) const {
  Matrix g(n_classes, n_classes);
  for (std::size_t i = 0; i < n_classes; ++i)
    for (std::size_t j = 0; j < n_classes; ++j)
      g(i, j) = i == j ? 1.0 : (group_of(i, n_classes) == group_of(j, n_classes) ? intra : inter);
  return g;
}

Matrix realize_gram(const Matrix& gram, std::size_t dim, std::uint64_t seed) {
  const std::size_t n = gram.rows();
  Eigen::MatrixXd g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) g(i, j) = gram(i, j);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
  if (eig.info() != Eigen::Success) throw GenerationError("realize_gram: eigendecomposition failed");
  const Eigen::VectorXd& w = eig.eigenvalues();  // ascending
  if (w(0) < -1e-9) {
    throw GenerationError("target similarity structure is not positive semidefinite (min eigenvalue " +
                          std::to_string(w(0)) + ")");
  }
  // Keep the leading min(n, dim) components.
  const std::size_t keep = std::min(n, dim);
  Eigen::MatrixXd coords = Eigen::MatrixXd::Zero(n, dim);
  for (std::size_t k = 0; k < keep; ++k) {
    const std::size_t src = n - 1 - k;
    const double s = std::sqrt(std::max(0.0, w(static_cast<Eigen::Index>(src))));
    coords.col(static_cast<Eigen::Index>(k)) = eig.eigenvectors().col(static_cast<Eigen::Index>(src)) * s;
  }
  Rng rng(mix_seed(seed, 0x6EA3));
  Eigen::MatrixXd gauss(dim, dim);
  for (Eigen::Index i = 0; i < gauss.rows(); ++i)
    for (Eigen::Index j = 0; j < gauss.cols(); ++j) gauss(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  const Eigen::MatrixXd rotation = qr.householderQ();
  const Eigen::MatrixXd rotated = coords * rotation.transpose();
  Matrix out(n, dim);
  for (std::size_t i = 0; i < n; ++i) {
    double norm = rotated.row(static_cast<Eigen::Index>(i)).norm();
    if (norm <= kEps) throw GenerationError("realize_gram: class " + std::to_string(i) + " collapsed to zero");
    for (std::size_t j = 0; j < dim; ++j) out(i, j) = rotated(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) / norm;
  }
  return out;
}

TextAnchorSet synth_text_anchors(std::size_t n_classes, std::size_t dim, const GroupStructure& structure,
                                 std::uint64_t seed) {
  if (n_classes == 0 || dim == 0) throw GenerationError("synth_text_anchors: empty shape");
  if (!(structure.intra >= 0.0 && structure.intra < 1.0)) {
    throw GenerationError("intra-group similarity must lie in [0, 1)");
  }
  if (!(structure.inter > -1.0 && structure.inter < 1.0)) {
    throw GenerationError("inter-group similarity must lie in (-1, 1)");
  }
  const Matrix target = structure.target_gram(n_classes);
  Matrix rows = realize_gram(target, dim, seed);
  const Matrix realized = cosine_gram(rows);
  for (std::size_t k = 0; k < target.size(); ++k) {
    if (std::abs(realized[k] - target[k]) > 0.05) {
      throw GenerationError("cannot realize the requested similarity structure in " + std::to_string(dim) +
                            " dimensions");
    }
  }
  std::vector<std::string> names;
  names.reserve(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) names.push_back("class_" + std::to_string(c));
  return TextAnchorSet(std::move(rows), std::move(names), AnchorSource::synthetic, "synthetic");
}

RelativeEncoding relative_encoding(std::span<const double> v, const Matrix& anchors, AnchorTag tag) {
  if (v.size() != anchors.cols()) {
    throw ContractViolation("relative_encoding: vector length " + std::to_string(v.size()) +
                            " != anchor dim " + std::to_string(anchors.cols()));
  }
  RelativeEncoding r;
  r.tag = tag;
  r.values.reserve(anchors.rows());
  for (std::size_t c = 0; c < anchors.rows(); ++c) r.values.push_back(cosine_similarity(v, anchors.row(c)));
  return r;
}

std::span<const double> reference_encoding(std::size_t label, const TextAnchorSet& anchors) {
  if (label >= anchors.count()) {
    throw ContractViolation("reference_encoding: label " + std::to_string(label) + " out of range");
  }
  return anchors.gram().row(label);
}

}  // namespace lava
