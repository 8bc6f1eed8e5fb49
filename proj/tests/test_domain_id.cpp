// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>

#include "lava/domain_id.hpp"
#include "lava/error.hpp"
#include "toy_model.hpp"

using namespace lava;
using namespace lava::testing;
using doctest::Approx;

namespace {

Backbone small_backbone(std::size_t depth = 3) {
  BackboneConfig c;
  c.depth = depth;
  c.hidden_dim = 8;
  c.heads = 2;
  c.mlp_ratio = 2.0;
  c.patch_count = 4;
  c.seed = 9;
  return Backbone(c);
}

DomainDataset shifted_domain(std::size_t id, std::size_t n, double offset) {
  DomainDataset d;
  d.domain_id = id;
  d.classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    // every patch is shifted along the first half of the feature axes
    Matrix tokens = random_matrix(4, 8, mix_seed(id, i), 0.5);
    Matrix probe = random_matrix(4, 8, mix_seed(id + 100, i), 0.5);
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 4; ++c) {
        tokens(r, c) += offset;
        probe(r, c) += offset;
      }
    d.train.push_back({tokens, i % 2});
    d.test.push_back({probe, i % 2});
  }
  return d;
}

// Cache of hand-set states: `rows` lists one feature per layer for each sample.
LayerFeatureCache hand_cache(const std::vector<std::vector<std::vector<double>>>& samples) {
  std::vector<Matrix> states;
  for (const auto& layers : samples) {
    Matrix m(layers.size(), layers.front().size());
    for (std::size_t l = 0; l < layers.size(); ++l) std::copy(layers[l].begin(), layers[l].end(), m.row(l).begin());
    states.push_back(m);
  }
  return LayerFeatureCache(std::move(states));
}

}  // namespace

TEST_CASE("layer sets normalize and validate") {
  CHECK(MLFIConfig{{3, 1, 3, 2}}.normalized(3).layers == std::vector<std::size_t>{1, 2, 3});
  CHECK_THROWS_AS(MLFIConfig{{}}.normalized(3), ConfigError);
  CHECK_THROWS_AS(MLFIConfig{{4}}.normalized(3), ConfigError);
  CHECK_THROWS_AS(MLFIConfig{{0}}.normalized(3), ConfigError);
}

TEST_CASE("multi-level features concatenate unprompted taps in ascending order") {
  const Backbone bb = small_backbone();
  const Matrix tokens = random_matrix(4, 8, 1);
  const auto f = multi_level_feature(bb, tokens, MLFIConfig{{3, 1}});
  CHECK(f.size() == 16);
  CHECK(f == multi_level_feature(bb, tokens, MLFIConfig{{1, 3}}));
  const Matrix seq = bb.build_prompted_sequence(bb.embed_patches(tokens), Matrix(0, 8));
  const std::array<std::size_t, 2> taps{1, 3};
  const auto ref = bb.encode_with_taps(seq, taps);
  for (std::size_t c = 0; c < 8; ++c) {
    CHECK(f[c] == ref[0][c]);
    CHECK(f[8 + c] == ref[1][c]);
  }
  const auto single = multi_level_feature(bb, tokens, MLFIConfig{{2}});
  const std::array<std::size_t, 1> two{2};
  CHECK(single == to_vec(bb.encode_with_taps(seq, two)[0]));
  LayerFeatureCache cache(bb, {{tokens, 0}}, false);
  CHECK(cache.feature(0, taps) == f);
}

TEST_CASE("prototype means") {
  const std::vector<std::vector<double>> three{{1, 2}, {3, 0}, {-1, 4}};
  const DomainPrototype p = build_prototype(2, three);
  CHECK(p.mu == std::vector<double>{1.0, 2.0});
  CHECK(p.count == 3);
  CHECK(p.domain == 2);
  const std::vector<std::vector<double>> one{{0.3, -0.7}};
  CHECK(build_prototype(0, one).mu == one[0]);
  std::vector<std::vector<double>> twice = three;
  twice.insert(twice.end(), three.begin(), three.end());
  const auto mu2 = build_prototype(0, twice).mu;
  for (std::size_t c = 0; c < 2; ++c) CHECK(mu2[c] == Approx(p.mu[c]).epsilon(1e-15));
  CHECK_THROWS_AS(build_prototype(0, std::span<const std::vector<double>>{}), ContractViolation);
}

TEST_CASE("identify picks the highest cosine with lowest-index ties") {
  const std::vector<DomainPrototype> bank{{{1, 0, 0}, 0, 1}, {{0.6, 0.8, 0}, 1, 1}, {{0, 0.2, 1}, 2, 1}};
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto z = to_vec(random_matrix(1, 3, s));
    std::size_t best = 0;
    double best_c = -2;
    for (std::size_t k = 0; k < 3; ++k) {
      const double c = naive_cos(z, bank[k].mu);
      if (c > best_c) {
        best_c = c;
        best = k;
      }
    }
    CHECK(identify_cosine(z, bank) == best);
  }
  const std::vector<DomainPrototype> tied{{{1, 0}, 0, 1}, {{2, 0}, 1, 1}};
  CHECK(identify_cosine(std::vector<double>{1, 1}, tied) == 0);
  CHECK(identify_cosine(std::vector<double>{0.6, 0.8, 0}, bank) == 1);
  CHECK(identify_cosine(std::vector<double>{0.6, 0.8, 0}, bank, 1) == 0);
  CHECK_THROWS_AS(identify_cosine(std::vector<double>{1, 0}, std::span<const DomainPrototype>{}), StateError);
}

TEST_CASE("a single-domain bank always answers that domain") {
  IdStrategy s;
  s.mlfi.layers = {3};
  PrototypeBank bank(s, 3);
  bank.add_domain_features(0, std::vector<std::vector<double>>{{1, 2, 3}});
  CHECK(bank.identify(std::vector<double>{-5, 1, 0}) == 0);
  PrototypeBank empty(s, 3);
  CHECK_THROWS_AS(empty.identify(std::vector<double>{1}), StateError);
  CHECK_THROWS_AS(bank.add_domain_features(3, std::vector<std::vector<double>>{{1, 2, 3}}), StateError);
}

TEST_CASE("probe at a prototype routes to it") {
  IdStrategy s;
  s.mlfi.layers = {3};
  PrototypeBank bank(s, 3);
  bank.add_domain_features(0, std::vector<std::vector<double>>{{1, 0}, {0.8, 0.2}});
  bank.add_domain_features(1, std::vector<std::vector<double>>{{0, 1}, {0.1, 0.9}});
  CHECK(bank.identify(bank.entries()[1].mu) == 1);
  CHECK(bank.identify(bank.entries()[1].mu, 1) == 0);
}

TEST_CASE("strategy degeneracies") {
  const Backbone bb = small_backbone();
  const std::vector<DomainDataset> domains{shifted_domain(0, 12, 1.0), shifted_domain(1, 12, -1.0)};

  IdStrategy nmc;
  nmc.kind = IdKind::nmc;
  IdStrategy mlfi_last;
  mlfi_last.mlfi.layers = {3};
  IdStrategy knn1;
  knn1.kind = IdKind::knn;
  knn1.knn_k = 1;
  IdStrategy pss;
  pss.kind = IdKind::pss;
  pss.pss_seed = 4;
  CHECK(strategy_layers(nmc, 3) == std::vector<std::size_t>{3});

  PrototypeBank b_nmc(nmc, 3), b_mlfi(mlfi_last, 3), b_knn(knn1, 3), b_pss(pss, 3);
  for (const auto& d : domains) {
    b_nmc.add_domain(bb, d);
    b_mlfi.add_domain(bb, d);
    b_knn.add_domain(bb, d);
    b_pss.add_domain(bb, d);
  }
  for (std::size_t t = 0; t < 2; ++t) {
    CHECK(b_nmc.entries()[t].mu == b_mlfi.entries()[t].mu);
    CHECK(b_knn.entries()[t].mu == b_nmc.entries()[t].mu);
    CHECK(b_pss.entries()[t].mu != b_nmc.entries()[t].mu);
  }
  for (const auto& d : domains) {
    const LayerFeatureCache cache(bb, d.test, false);
    for (std::size_t i = 0; i < cache.size(); ++i) {
      const auto f = b_nmc.test_feature(cache, i);
      CHECK(b_mlfi.test_feature(cache, i) == f);
      CHECK(b_pss.test_feature(cache, i) == f);
      CHECK(b_mlfi.identify(f) == b_nmc.identify(f));
      CHECK(b_knn.identify(f) == b_nmc.identify(f));
    }
  }
}

TEST_CASE("KNN bank holds K entries per domain and rejects K above the sample count") {
  IdStrategy s;
  s.kind = IdKind::knn;
  s.knn_k = 3;
  PrototypeBank bank(s, 2);
  std::vector<std::vector<double>> feats;
  for (std::uint64_t i = 0; i < 9; ++i) feats.push_back(to_vec(random_matrix(1, 4, i)));
  bank.add_domain_features(0, feats);
  CHECK(bank.entries().size() == 3);
  s.knn_k = 10;
  PrototypeBank big(s, 2);
  CHECK_THROWS_AS(big.add_domain_features(0, feats), ConfigError);
  s.knn_metric = KnnMetric::l2;
  s.knn_k = 2;
  PrototypeBank l2(s, 2);
  l2.add_domain_features(0, std::vector<std::vector<double>>{{0, 0}, {0.1, 0}});
  l2.add_domain_features(1, std::vector<std::vector<double>>{{10, 10}, {10, 11}});
  // cosine would prefer domain 1 here; L2 distance prefers the origin cluster
  CHECK(l2.identify(std::vector<double>{1, 1}) == 0);
}

TEST_CASE("kmeans separates well-separated clusters") {
  std::vector<std::vector<double>> pts;
  for (std::uint64_t i = 0; i < 10; ++i) {
    auto p = to_vec(random_matrix(1, 2, i, 0.1));
    p[0] += (i % 2 == 0) ? 5.0 : -5.0;
    pts.push_back(p);
  }
  const auto c = kmeans(pts, 2, KnnMetric::l2, 3);
  REQUIRE(c.size() == 2);
  CHECK(std::abs(std::abs(c[0][0]) - 5.0) < 0.5);
  CHECK(c[0][0] * c[1][0] < 0.0);
  CHECK(kmeans(pts, 2, KnnMetric::l2, 3) == c);
  CHECK_THROWS_AS(kmeans(pts, 0, KnnMetric::l2, 3), ConfigError);
}

TEST_CASE("names parse") {
  for (IdKind k : {IdKind::mlfi, IdKind::nmc, IdKind::knn, IdKind::pss}) CHECK(parse_id_kind(to_string(k)) == k);
  CHECK(parse_knn_metric("l2") == KnnMetric::l2);
  CHECK_THROWS_AS(parse_id_kind("svm"), ConfigError);
}

TEST_CASE("layer search returns a dominating singleton") {
  // layer 1 separates the two domains, layers 2-3 carry identical noise for both
  auto sample = [](double sign, double noise) {
    return std::vector<std::vector<double>>{{sign, 0.1}, {noise, 1}, {1, noise}};
  };
  const std::vector<LayerFeatureCache> train{hand_cache({sample(1, 0.3), sample(1, -0.3)}),
                                             hand_cache({sample(-1, 0.3), sample(-1, -0.3)})};
  const std::vector<LayerFeatureCache> val{hand_cache({sample(1, 0.5), sample(1, -0.2)}),
                                           hand_cache({sample(-1, -0.5), sample(-1, 0.2)})};
  const LayerSearchReport r = greedy_layer_search(train, val);
  CHECK(r.best_layers == std::vector<std::size_t>{1});
  CHECK(r.best_accuracy == 1.0);
  CHECK(r.ranking.front() == 1);
  for (const auto& c : r.candidates) CHECK_FALSE(c.accepted);
  CHECK_THROWS_AS(greedy_layer_search(train, std::span<const LayerFeatureCache>{}), ConfigError);
}

TEST_CASE("layer search combines complementary layers") {
  // domains 0/1 differ only at layer 1, domains 1/2 only at layer 2
  auto sample = [](double a, double b, double jitter) {
    return std::vector<std::vector<double>>{{a, 1 + jitter}, {b, 1 - jitter}, {1, jitter}};
  };
  auto domain = [&](double a, double b) {
    return hand_cache({sample(a, b, 0.05), sample(a, b, -0.05), sample(a, b, 0.02)});
  };
  const std::vector<LayerFeatureCache> train{domain(1, 0), domain(-1, 0), domain(-1, 2)};
  const std::vector<LayerFeatureCache> val{domain(1, 0), domain(-1, 0), domain(-1, 2)};
  const LayerSearchReport r = greedy_layer_search(train, val);
  const double single_best = *std::max_element(r.single_layer_accuracy.begin(), r.single_layer_accuracy.end());
  CHECK(r.best_accuracy > single_best);
  CHECK(std::find(r.best_layers.begin(), r.best_layers.end(), 1) != r.best_layers.end());
  CHECK(std::find(r.best_layers.begin(), r.best_layers.end(), 2) != r.best_layers.end());
  // exhaustive oracle over every non-empty subset of the three layers
  double exhaustive = 0;
  for (unsigned mask = 1; mask < 8; ++mask) {
    std::vector<std::size_t> layers;
    for (std::size_t l = 0; l < 3; ++l)
      if (mask & (1u << l)) layers.push_back(l + 1);
    exhaustive = std::max(exhaustive, mlfi_accuracy(train, val, layers));
  }
  CHECK(r.best_accuracy == exhaustive);
  CHECK(r.best_accuracy >= single_best);
  const std::string json = r.to_json();
  CHECK(json.find("best_layers") != std::string::npos);
}

TEST_CASE("identification accuracy counts correct routes") {
  const Backbone bb = small_backbone();
  const std::vector<DomainDataset> domains{shifted_domain(0, 10, 2.0), shifted_domain(1, 10, -2.0)};
  PrototypeBank bank(IdStrategy{IdKind::mlfi, MLFIConfig{{1, 3}}}, 3);
  std::vector<LayerFeatureCache> tests;
  for (const auto& d : domains) {
    bank.add_domain(bb, d);
    tests.emplace_back(bb, d.test, false);
  }
  const double acc = identification_accuracy(bank, tests);
  std::size_t correct = 0, total = 0;
  for (std::size_t t = 0; t < 2; ++t)
    for (std::size_t i = 0; i < tests[t].size(); ++i, ++total) correct += bank.identify(bank.test_feature(tests[t], i)) == t;
  CHECK(acc == Approx(static_cast<double>(correct) / total));
  CHECK(acc > 0.9);
}
