// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lava/matrix.hpp"
#include "lava/simd.hpp"
#include "test_util.hpp"

using namespace lava;

namespace {


struct ActiveGuard {
  simd::Isa saved = simd::kernels().isa;
  ~ActiveGuard() { simd::set_active(saved); }
};

}  // namespace

TEST_CASE("scalar kernels match naive loops") {
  for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 16u, 33u}) {
    const auto x = testing::to_vec(testing::random_matrix(1, std::max<std::size_t>(n, 1), n));
    const auto y = testing::to_vec(testing::random_matrix(1, std::max<std::size_t>(n, 1), n + 99));
    double d = 0, s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      d += x[i] * y[i];
      s += x[i];
    }
    CHECK(simd::scalar::dot(x.data(), y.data(), n) == d);
    CHECK(simd::scalar::sum(x.data(), n) == s);
  }
}

#if defined(LAVA_HAVE_AVX2)
TEST_CASE("avx2 kernels agree with scalar kernels") {
  if (!simd::cpu_supports(simd::Isa::avx2)) {
    MESSAGE("cpu lacks avx2+fma; skipping");
    return;
  }
  for (std::size_t n = 0; n <= 67; ++n) {
    const std::size_t m = std::max<std::size_t>(n, 1);
    const auto x = testing::to_vec(testing::random_matrix(1, m, 1000 + n));
    const auto y = testing::to_vec(testing::random_matrix(1, m, 2000 + n));
    // Reductions reassociate, so compare to rounding; elementwise kernels are exact.
    const double ds = simd::scalar::dot(x.data(), y.data(), n);
    const double dv = simd::avx2::dot(x.data(), y.data(), n);
    double mag = 0;
    for (std::size_t i = 0; i < n; ++i) mag += std::abs(x[i] * y[i]);
    CHECK(std::abs(ds - dv) <= 1e-14 * std::max(mag, 1.0));
    double smag = 0;
    for (std::size_t i = 0; i < n; ++i) smag += std::abs(x[i]);
    CHECK(std::abs(simd::scalar::sum(x.data(), n) - simd::avx2::sum(x.data(), n)) <= 1e-14 * std::max(smag, 1.0));

    auto ys = y, yv = y;
    simd::scalar::axpy(0.37, x.data(), ys.data(), n);
    simd::avx2::axpy(0.37, x.data(), yv.data(), n);
    // fused multiply-add rounds once where the scalar path rounds twice
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(ys[i] - yv[i]) <= 4.5e-16 * (std::abs(0.37 * x[i]) + std::abs(y[i])));
    ys = y;
    yv = y;
    simd::scalar::scale(-1.7, ys.data(), n);
    simd::avx2::scale(-1.7, yv.data(), n);
    CHECK(ys == yv);
  }
}

TEST_CASE("matrix products agree across kernel tables") {
  if (!simd::cpu_supports(simd::Isa::avx2)) return;
  ActiveGuard guard;
  const Matrix a = testing::random_matrix(9, 13, 1);
  const Matrix b = testing::random_matrix(13, 6, 2);
  simd::set_active(simd::Isa::scalar);
  const Matrix ps = matmul(a, b), pns = matmul_nt(a, transpose(b)), pts = matmul_tn(transpose(a), b);
  simd::set_active(simd::Isa::avx2);
  CHECK(max_relative_error(matmul(a, b), ps) <= 1e-13);
  CHECK(max_relative_error(matmul_nt(a, transpose(b)), pns) <= 1e-13);
  CHECK(max_relative_error(matmul_tn(transpose(a), b), pts) <= 1e-13);
}
#endif

TEST_CASE("dispatch table") {
  ActiveGuard guard;
  CHECK(simd::cpu_supports(simd::Isa::scalar));
  simd::set_active(simd::Isa::scalar);
  CHECK(simd::kernels().isa == simd::Isa::scalar);
  CHECK(simd::name(simd::Isa::scalar) == "scalar");
  CHECK(simd::name(simd::Isa::avx2) == "avx2");
  CHECK(simd::table_for(simd::Isa::scalar).dot == &simd::scalar::dot);
}
