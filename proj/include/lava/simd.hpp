// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string_view>

// Inner-loop kernels behind every dense product in the library. A scalar
// reference set is always built; an AVX2+FMA set is built on x86-64 and chosen
// at startup when the CPU reports support. LAVA_SIMD=scalar|avx2 overrides the
// choice (useful for cross-machine byte comparisons).

namespace lava::simd {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y *= alpha
  void (*scale)(double alpha, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
};

namespace scalar {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
}  // namespace scalar

#if defined(LAVA_HAVE_AVX2)
namespace avx2 {
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale(double alpha, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
}  // namespace avx2
#endif

bool cpu_supports(Isa isa);
const KernelTable& table_for(Isa isa);

/// The active table. Resolved once from the CPU and LAVA_SIMD.
const KernelTable& kernels();

/// Switch the active table; throws ContractViolation when unsupported.
void set_active(Isa isa);

std::string_view name(Isa isa);

}  // namespace lava::simd
