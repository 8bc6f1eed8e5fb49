// SPDX-License-Identifier: Apache-2.0
#include "lava/datagen.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>

#include "lava/backbone.hpp"
#include "lava/error.hpp"
#include "lava/numerics.hpp"

namespace lava {

namespace {

using Json = nlohmann::json;

Matrix random_unit(std::size_t dim, Rng& rng) {
  Matrix v = rng.normal_matrix(1, dim, 1.0);
  const double n = frobenius(v);
  for (double& x : v.values()) x /= n;
  return v;
}

/// U R(theta) U^T with U a random orthonormal basis and R rotating
/// consecutive basis pairs by theta.
Matrix random_rotation(std::size_t dim, double theta, Rng& rng) {
  Eigen::MatrixXd gauss(dim, dim);
  for (Eigen::Index i = 0; i < gauss.rows(); ++i)
    for (Eigen::Index j = 0; j < gauss.cols(); ++j) gauss(i, j) = rng.normal();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  const Eigen::MatrixXd u = qr.householderQ();
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(dim, dim);
  const double c = std::cos(theta), s = std::sin(theta);
  for (Eigen::Index k = 0; k + 1 < static_cast<Eigen::Index>(dim); k += 2) {
    r(k, k) = c;
    r(k, k + 1) = -s;
    r(k + 1, k) = s;
    r(k + 1, k + 1) = c;
  }
  const Eigen::MatrixXd q = u * r * u.transpose();
  Matrix out(dim, dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) out(i, j) = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

bool contains(const std::vector<std::size_t>& v, std::size_t x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

template <typename T>
T field(const Json& obj, const char* key, std::size_t line) {
  if (!obj.is_object() || !obj.contains(key)) throw FormatError(std::string("missing field '") + key + "'", line);
  try {
    return obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw FormatError(std::string("field '") + key + "' has the wrong type", line);
  }
}

}  // namespace

void BenchmarkConfig::validate() const {
  if (domains < 1) throw ConfigError("must be at least 1", "benchmark.domains");
  if (classes < 2) throw ConfigError("must be at least 2", "benchmark.classes");
  if (dim == 0) throw ConfigError("must be positive", "benchmark.dim");
  if (patch_count == 0) throw ConfigError("must be positive", "benchmark.patch_count");
  if (train_per_class == 0) throw ConfigError("must be positive", "benchmark.train_per_class");
  if (test_per_class == 0) throw ConfigError("must be positive", "benchmark.test_per_class");
  if (text_dim == 0) throw ConfigError("must be positive", "benchmark.text_dim");
  if (!(shift.noise_sigma >= 0.0)) throw ConfigError("must be non-negative", "benchmark.shift.noise_sigma");
  if (!(shift.translation >= 0.0)) throw ConfigError("must be non-negative", "benchmark.shift.translation");
  if (!(geometry_knob >= 0.0 && geometry_knob <= 1.0)) {
    throw ConfigError("must lie in [0, 1]", "benchmark.geometry_knob");
  }
  if (!(class_scale > 0.0)) throw ConfigError("must be positive", "benchmark.class_scale");
  if (!(cue.high_scale > 0.0)) throw ConfigError("must be positive", "benchmark.cue.high_scale");
}

Benchmark generate_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  if (cfg.classes > cfg.dim) {
    throw GenerationError("cannot place " + std::to_string(cfg.classes) + " class means in " +
                          std::to_string(cfg.dim) + " dimensions");
  }
  const Matrix target = cfg.groups.target_gram(cfg.classes);
  const Matrix base = realize_gram(target, cfg.dim, mix_seed(cfg.seed, 1));
  TextAnchorSet text = synth_text_anchors(cfg.classes, cfg.text_dim, cfg.groups, mix_seed(cfg.seed, 2));

  Benchmark bench{{}, std::move(text), {}, {}};
  const double theta = cfg.shift.rotation_deg * std::numbers::pi / 180.0;
  const double k = cfg.geometry_knob;
  const Matrix positions = sinusoidal_positions(cfg.patch_count, cfg.dim);

  for (std::size_t t = 0; t < cfg.domains; ++t) {
    Rng rng(mix_seed(cfg.seed, 100 + t));
    const Matrix rotation = theta != 0.0 ? random_rotation(cfg.dim, theta, rng) : Matrix();
    Matrix offset(1, cfg.dim);
    if (cfg.shift.translation > 0.0) {
      offset = random_unit(cfg.dim, rng);
      for (double& v : offset.values()) v *= cfg.shift.translation;
    }
    Matrix means(cfg.classes, cfg.dim);
    Matrix directions(cfg.classes, cfg.dim);
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      Matrix m = base.row_copy(c);
      if (k < 1.0) {
        const Matrix indep = random_unit(cfg.dim, rng);
        for (std::size_t i = 0; i < cfg.dim; ++i) m[i] = k * m[i] + std::sqrt(1.0 - k * k) * indep[i];
        const double n = frobenius(m);
        for (double& v : m.values()) v /= n;
      }
      if (!rotation.empty()) m = matmul_nt(m, rotation);
      for (std::size_t i = 0; i < cfg.dim; ++i) {
        directions(c, i) = cfg.class_scale * m[i];
        means(c, i) = directions(c, i) + offset[i];
      }
    }

    Matrix low_cue;
    if (cfg.cue.enabled && contains(cfg.cue.low_domains, t)) {
      low_cue = random_unit(cfg.dim, rng);
      for (double& v : low_cue.values()) v *= cfg.cue.low_amplitude;
    }
    const bool high_cue = cfg.cue.enabled && contains(cfg.cue.high_domains, t);

    DomainDataset ds;
    ds.domain_id = t;
    ds.name = "domain_" + std::to_string(t);
    ds.classes = cfg.classes;
    auto make_split = [&](std::size_t per_class, std::vector<Sample>& out) {
      out.reserve(per_class * cfg.classes);
      for (std::size_t i = 0; i < per_class; ++i) {
        for (std::size_t c = 0; c < cfg.classes; ++c) {
          Sample s;
          s.label = c;
          s.tokens = Matrix(cfg.patch_count, cfg.dim);
          const double scale = high_cue ? cfg.cue.high_scale : 1.0;
          for (std::size_t p = 0; p < cfg.patch_count; ++p) {
            for (std::size_t j = 0; j < cfg.dim; ++j) {
              double v = means(c, j) + cfg.shift.noise_sigma * rng.normal();
              if (!low_cue.empty()) v += low_cue[j];
              if (scale != 1.0) v = scale * (v + positions(p, j)) - positions(p, j);
              s.tokens(p, j) = v;
            }
          }
          out.push_back(std::move(s));
        }
      }
    };
    make_split(cfg.train_per_class, ds.train);
    make_split(cfg.val_per_class, ds.val);
    make_split(cfg.test_per_class, ds.test);
    bench.domains.push_back(std::move(ds));
    bench.class_means.push_back(std::move(directions));
    bench.offsets.push_back(std::move(offset));
  }
  return bench;
}

std::vector<std::size_t> inverse_permutation(std::span<const std::size_t> order) {
  std::vector<std::size_t> inv(order.size(), order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (order[k] >= order.size() || inv[order[k]] != order.size()) {
      throw ContractViolation("domain order is not a permutation");
    }
    inv[order[k]] = k;
  }
  return inv;
}

std::vector<DomainDataset> permute_domain_order(std::vector<DomainDataset> datasets,
                                                std::span<const std::size_t> order) {
  if (order.size() != datasets.size()) throw ContractViolation("domain order length differs from domain count");
  inverse_permutation(order);  // validates
  std::vector<DomainDataset> out;
  out.reserve(datasets.size());
  for (std::size_t k : order) out.push_back(std::move(datasets[k]));
  return out;
}

DomainDataset parse_feature_dataset(std::istream& in, std::size_t classes) {
  std::string line;
  std::size_t number = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(in, line)) {
      ++number;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_line()) throw ContractViolation("feature dataset: empty file");
  Json header;
  try {
    header = Json::parse(line);
  } catch (const Json::parse_error& e) {
    throw FormatError(std::string("invalid JSON: ") + e.what(), number);
  }
  const auto dim = field<std::size_t>(header, "dim", number);
  const auto count = field<std::size_t>(header, "count", number);
  if (!header.contains("domain")) throw FormatError("missing field 'domain'", number);
  if (dim == 0) throw FormatError("header dim must be positive", number);

  DomainDataset ds;
  ds.name = header["domain"].is_string() ? header["domain"].get<std::string>() : header["domain"].dump();
  ds.classes = classes;
  ds.bypass_stem = true;
  for (std::size_t i = 0; i < count; ++i) {
    if (!next_line()) throw FormatError("expected " + std::to_string(count) + " samples, found " + std::to_string(i), number);
    Json obj;
    try {
      obj = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw FormatError(std::string("invalid JSON: ") + e.what(), number);
    }
    const auto label = field<long long>(obj, "label", number);
    const auto feature = field<std::vector<double>>(obj, "feature", number);
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw FormatError("label " + std::to_string(label) + " outside the " + std::to_string(classes) + "-class map",
                        number);
    }
    if (feature.size() != dim) {
      throw FormatError("feature length " + std::to_string(feature.size()) + " != dim " + std::to_string(dim), number);
    }
    const std::string split = obj.contains("split") ? field<std::string>(obj, "split", number) : "train";
    Sample s{Matrix::row_vector(feature), static_cast<std::size_t>(label)};
    if (split == "train") ds.train.push_back(std::move(s));
    else if (split == "val") ds.val.push_back(std::move(s));
    else if (split == "test") ds.test.push_back(std::move(s));
    else throw FormatError("unknown split '" + split + "'", number);
  }
  if (next_line()) throw FormatError("trailing content after " + std::to_string(count) + " samples", number);
  if (count == 0) throw ContractViolation("feature dataset: no samples");
  return ds;
}

DomainDataset load_feature_dataset(const std::filesystem::path& path, std::size_t classes) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open feature dataset " + path.string());
  return parse_feature_dataset(in, classes);
}

void write_feature_dataset(std::ostream& out, const DomainDataset& data) {
  const std::size_t count = data.train.size() + data.val.size() + data.test.size();
  std::size_t dim = 0;
  for (const auto* split : {&data.train, &data.val, &data.test})
    if (!split->empty()) dim = split->front().tokens.size();
  out << Json{{"dim", dim}, {"count", count}, {"domain", data.name}}.dump() << '\n';
  auto emit = [&](const std::vector<Sample>& split, const char* name) {
    for (const Sample& s : split) {
      Json line = {{"label", s.label},
                   {"feature", std::vector<double>(s.tokens.values().begin(), s.tokens.values().end())},
                   {"split", name}};
      out << line.dump() << '\n';
    }
  };
  emit(data.train, "train");
  emit(data.val, "val");
  emit(data.test, "test");
}

double gram_disagreement(const Matrix& means_a, const Matrix& means_b) {
  Matrix diff = cosine_gram(means_a);
  add_scaled(diff, cosine_gram(means_b), -1.0);
  return frobenius(diff);
}

}  // namespace lava
