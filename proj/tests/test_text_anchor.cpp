// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "lava/error.hpp"
#include "lava/text_anchor.hpp"
#include "test_util.hpp"

using namespace lava;
using doctest::Approx;

namespace {

const char* kThree =
    "{\"dim\": 4, \"count\": 3, \"encoder\": \"toy\"}\n"
    "{\"class\": \"cat\", \"embedding\": [1, 2, 0, 0]}\n"
    "{\"class\": \"dog\", \"embedding\": [0, 0, 3, 0]}\n"
    "{\"class\": \"cow\", \"embedding\": [0.5, 0.5, 0.5, 0.5]}\n";

TextAnchorSet parse(const std::string& text) {
  std::istringstream in(text);
  return parse_text_anchors(in);
}

std::size_t format_line(const std::string& text) {
  try {
    parse(text);
  } catch (const FormatError& e) {
    return e.line();
  }
  return static_cast<std::size_t>(-1);
}

}  // namespace

TEST_CASE("load a small anchor file") {
  const TextAnchorSet a = parse(kThree);
  CHECK(a.count() == 3);
  CHECK(a.dim() == 4);
  CHECK(a.class_names() == std::vector<std::string>{"cat", "dog", "cow"});
  CHECK(a.encoder() == "toy");
  CHECK(a.source() == AnchorSource::file);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto row = testing::to_vec(a.anchors().row_copy(r));
    CHECK(std::sqrt(testing::naive_dot(row, row)) == Approx(1.0).epsilon(1e-9));
  }
  CHECK(a.anchors()(0, 1) == Approx(2.0 / std::sqrt(5.0)));
  const TextAnchorSet b = parse(kThree);
  CHECK(a.anchors() == b.anchors());
  CHECK(a.fingerprint() == b.fingerprint());
}

TEST_CASE("write then parse round-trips exactly") {
  const TextAnchorSet a = synth_text_anchors(6, 8, GroupStructure{2, 0.6, 0.1}, 11);
  std::ostringstream out;
  write_text_anchors(out, a);
  const TextAnchorSet b = parse(out.str());
  CHECK(a.anchors() == b.anchors());
  CHECK(a.class_names() == b.class_names());
}

TEST_CASE("malformed anchor files report the line") {
  CHECK(format_line("") == 0);
  CHECK(format_line("{\"dim\": 4, \"count\": 1, \"encoder\": \"x\"}\n{\"class\": \"a\", \"embedding\": [1,2]}\n") == 2);
  CHECK(format_line("{\"dim\": 2, \"count\": 2, \"encoder\": \"x\"}\n{\"class\": \"a\", \"embedding\": [1,2]}\n"
                    "{\"class\": \"a\", \"embedding\": [2,1]}\n") == 3);
  CHECK(format_line("{\"dim\": 2, \"count\": 1, \"encoder\": \"x\"}\n{\"class\": \"a\", \"embedding\": [1,2}\n") == 2);
  CHECK(format_line("{\"dim\": 2, \"count\": 1}\n") == 1);
  CHECK(format_line("{\"dim\": 2, \"count\": 2, \"encoder\": \"x\"}\n{\"class\": \"a\", \"embedding\": [1,2]}\n") == 2);
  CHECK(format_line("{\"dim\": 2, \"count\": 1, \"encoder\": \"x\"}\n{\"class\": \"a\", \"embedding\": [0,0]}\n") ==
        0);
  CHECK(format_line("{\"dim\": 2, \"count\": 1, \"encoder\": \"x\"}\n{\"class\": \"a\", \"embedding\": [1,0]}\n"
                    "{\"class\": \"b\", \"embedding\": [1,0]}\n") == 3);
  CHECK_THROWS_AS(load_text_anchors("/nonexistent/anchors.jsonl"), FormatError);
}

TEST_CASE("unknown keys warn but load") {
  take_warnings();
  parse("{\"dim\": 2, \"count\": 1, \"encoder\": \"x\", \"extra\": 1}\n{\"class\": \"a\", \"embedding\": [1,0]}\n");
  CHECK(warning_count() == 1);
  take_warnings();
}

TEST_CASE("synthetic anchors realize the requested structure") {
  const TextAnchorSet pair = synth_text_anchors(2, 8, GroupStructure{2, 0.0, 0.0}, 1);
  CHECK(std::abs(pair.gram()(0, 1)) <= 0.05);

  const GroupStructure gs{2, 0.8, 0.1};
  const TextAnchorSet a = synth_text_anchors(4, 6, gs, 2);
  const Matrix target = gs.target_gram(4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const double direct =
          testing::naive_cos(testing::to_vec(a.anchors().row_copy(i)), testing::to_vec(a.anchors().row_copy(j)));
      CHECK(std::abs(direct - target(i, j)) <= 0.05);
    }
  CHECK(target(0, 1) == 0.8);
  CHECK(target(0, 2) == 0.1);
  CHECK(a.anchors() == synth_text_anchors(4, 6, gs, 2).anchors());
  CHECK(a.source() == AnchorSource::synthetic);
}

TEST_CASE("infeasible structures raise GenerationError") {
  CHECK_THROWS_AS(synth_text_anchors(4, 4, GroupStructure{2, 1.0, 0.0}, 1), GenerationError);
  // three mutually anti-correlated groups at -0.9 are not positive semidefinite
  CHECK_THROWS_AS(synth_text_anchors(3, 4, GroupStructure{3, 0.0, -0.9}, 1), GenerationError);
  // eight orthogonal classes do not fit in four dimensions
  CHECK_THROWS_AS(synth_text_anchors(8, 4, GroupStructure{8, 0.0, 0.0}, 1), GenerationError);
}

TEST_CASE("relative encoding examples") {
  const Matrix eye = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const auto r = relative_encoding(eye.row(1), eye);
  CHECK(r.values == std::vector<double>{0, 1, 0});
  const double th = std::numbers::pi / 3;
  const Matrix pair = Matrix::from_rows({{1, 0}, {std::cos(th), std::sin(th)}});
  const auto r2 = relative_encoding(pair.row(0), pair);
  CHECK(r2.values[0] == Approx(1.0));
  CHECK(r2.values[1] == Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(relative_encoding(std::vector<double>{1, 2}, eye), ContractViolation);
}

TEST_CASE("relative encoding is scale invariant") {
  const TextAnchorSet a = synth_text_anchors(5, 7, GroupStructure{1, 0.3, 0.0}, 3);
  for (std::uint64_t s = 0; s < 20; ++s) {
    auto v = testing::to_vec(testing::random_matrix(1, 7, s));
    const auto r = relative_encoding(v, a.anchors());
    for (double& x : v) x *= 3.7;
    const auto rs = relative_encoding(v, a.anchors());
    for (std::size_t c = 0; c < 5; ++c) {
      CHECK(std::abs(r.values[c] - rs.values[c]) <= 1e-12);
      CHECK(std::abs(r.values[c]) <= 1.0);
    }
  }
}

TEST_CASE("reference encodings form the symmetric Gram matrix") {
  const TextAnchorSet a = synth_text_anchors(6, 9, GroupStructure{3, 0.5, 0.2}, 4);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto ri = reference_encoding(i, a);
    CHECK(ri[i] == Approx(1.0).epsilon(1e-12));
    CHECK(ri.data() == reference_encoding(i, a).data());
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(std::abs(ri[j] - reference_encoding(j, a)[i]) <= 1e-12);
      const double direct =
          testing::naive_cos(testing::to_vec(a.anchors().row_copy(i)), testing::to_vec(a.anchors().row_copy(j)));
      CHECK(ri[j] == Approx(direct).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(reference_encoding(6, a), ContractViolation);
}

TEST_CASE("constructor rejects bad sets") {
  CHECK_THROWS_AS(TextAnchorSet(Matrix::from_rows({{1, 0}, {0, 1}}), {"a", "a"}, AnchorSource::synthetic),
                  FormatError);
  CHECK_THROWS_AS(TextAnchorSet(Matrix::from_rows({{1, 0}}), {"a", "b"}, AnchorSource::synthetic), ContractViolation);
}
