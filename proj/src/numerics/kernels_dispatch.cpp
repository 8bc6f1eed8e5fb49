// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "lava/error.hpp"
#include "lava/simd.hpp"

namespace lava::simd {

namespace {

constexpr KernelTable kScalarTable{Isa::scalar, &scalar::dot, &scalar::axpy, &scalar::scale,
                                   &scalar::sum};
#if defined(LAVA_HAVE_AVX2)
constexpr KernelTable kAvx2Table{Isa::avx2, &avx2::dot, &avx2::axpy, &avx2::scale, &avx2::sum};
#endif

const KernelTable* resolve_initial() {
  const char* env = std::getenv("LAVA_SIMD");
  if (env != nullptr && std::string(env) == "scalar") return &kScalarTable;
#if defined(LAVA_HAVE_AVX2)
  if (cpu_supports(Isa::avx2)) return &kAvx2Table;
#endif
  return &kScalarTable;
}

std::atomic<const KernelTable*>& active() {
  static std::atomic<const KernelTable*> table{resolve_initial()};
  return table;
}

}  // namespace

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(LAVA_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table_for(Isa isa) {
  if (!cpu_supports(isa)) {
    throw ContractViolation("kernel set '" + std::string(name(isa)) + "' unsupported on this CPU");
  }
#if defined(LAVA_HAVE_AVX2)
  if (isa == Isa::avx2) return kAvx2Table;
#endif
  return kScalarTable;
}

const KernelTable& kernels() { return *active().load(std::memory_order_relaxed); }

void set_active(Isa isa) { active().store(&table_for(isa), std::memory_order_relaxed); }

std::string_view name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace lava::simd
