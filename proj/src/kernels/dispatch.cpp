#include <cstdlib>
#include <string_view>

#include "bitforge/kernels.hpp"

namespace bitforge::kernels {

#ifdef BITFORGE_HAVE_AVX2
const KernelTable& avx2_kernels();  // avx2.cpp
#endif

const KernelTable* avx2_table() {
#ifdef BITFORGE_HAVE_AVX2
  static const bool supported = [] {
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
  }();
  if (supported) return &avx2_kernels();
#endif
  return nullptr;
}

const KernelTable& active() {
  static const KernelTable& table = []() -> const KernelTable& {
    const char* forced = std::getenv("BITFORGE_ISA");
    if (forced && std::string_view(forced) == "scalar") return scalar_table();
    if (const KernelTable* t = avx2_table()) return *t;
    return scalar_table();
  }();
  return table;
}

}  // namespace bitforge::kernels
