#pragma once

// Dense double-precision inner loops used by the tensor engine. Each entry
// point has a portable scalar reference and, on x86-64, an AVX2+FMA variant.
// The variant is chosen once at startup from CPUID; set BITFORGE_ISA=scalar
// to force the reference path.
//
// All matrices are row-major with explicit leading dimensions. The GEMM
// routines accumulate into C.

#include <cstddef>
#include <string_view>

namespace bitforge::kernels {

struct KernelTable {
  std::string_view name;

  /// C[m x n] += A[m x k] * B[k x n]
  void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);

  /// C[m x n] += A[m x k] * B[n x k]^T
  void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc);

  /// y += alpha * x
  void (*axpy)(std::size_t n, double alpha, const double* x, double* y);

  double (*dot)(std::size_t n, const double* x, const double* y);
};

const KernelTable& scalar_table();

/// nullptr when the binary was built without AVX2 support or the CPU lacks
/// AVX2/FMA.
const KernelTable* avx2_table();

/// The table selected for this process.
const KernelTable& active();

}  // namespace bitforge::kernels
