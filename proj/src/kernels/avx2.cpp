// AVX2 + FMA kernels. This translation unit is compiled with -mavx2 -mfma
// and must only be entered through the dispatcher after a CPUID check.

#include <immintrin.h>

#include "bitforge/kernels.hpp"

namespace bitforge::kernels {
namespace {

// 4x8 register tile: rows i..i+3, columns j..j+7, k streamed in order.
inline void tile_4x8(std::size_t k, const double* a, std::size_t lda, const double* b,
                     std::size_t ldb, double* c, std::size_t ldc) {
  __m256d c00 = _mm256_loadu_pd(c);
  __m256d c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc);
  __m256d c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc);
  __m256d c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc);
  __m256d c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    __m256d av = _mm256_broadcast_sd(a + p);
    c00 = _mm256_fmadd_pd(av, b0, c00);
    c01 = _mm256_fmadd_pd(av, b1, c01);
    av = _mm256_broadcast_sd(a + lda + p);
    c10 = _mm256_fmadd_pd(av, b0, c10);
    c11 = _mm256_fmadd_pd(av, b1, c11);
    av = _mm256_broadcast_sd(a + 2 * lda + p);
    c20 = _mm256_fmadd_pd(av, b0, c20);
    c21 = _mm256_fmadd_pd(av, b1, c21);
    av = _mm256_broadcast_sd(a + 3 * lda + p);
    c30 = _mm256_fmadd_pd(av, b0, c30);
    c31 = _mm256_fmadd_pd(av, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

// 1x8 tile for leftover rows.
inline void tile_1x8(std::size_t k, const double* a, const double* b, std::size_t ldb,
                     double* c) {
  __m256d c0 = _mm256_loadu_pd(c);
  __m256d c1 = _mm256_loadu_pd(c + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = b + p * ldb;
    const __m256d av = _mm256_broadcast_sd(a + p);
    c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow), c0);
    c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + 4), c1);
  }
  _mm256_storeu_pd(c, c0);
  _mm256_storeu_pd(c + 4, c1);
}

// Column tail (< 8 columns), one element at a time.
inline void tail_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a,
                        std::size_t lda, const double* b, std::size_t ldb, double* c,
                        std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = c[i * ldc + j];
      for (std::size_t p = 0; p < k; ++p) acc = __builtin_fma(a[i * lda + p], b[p * ldb + j], acc);
      c[i * ldc + j] = acc;
    }
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc) {
  const std::size_t n8 = n - n % 8;
  const std::size_t m4 = m - m % 4;
  // Column strips outermost so a K x 8 strip of B stays in L1 across rows.
  for (std::size_t j = 0; j < n8; j += 8) {
    std::size_t i = 0;
    for (; i < m4; i += 4) tile_4x8(k, a + i * lda, lda, b + j, ldb, c + i * ldc + j, ldc);
    for (; i < m; ++i) tile_1x8(k, a + i * lda, b + j, ldb, c + i * ldc + j);
  }
  if (n8 < n) tail_scalar(m, n - n8, k, a, lda, b + n8, ldb, c + n8, ldc);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(std::size_t n, const double* x, const double* y) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc = __builtin_fma(x[i], y[i], acc);
  return acc;
}

// C[i][j] += dot(A row i, B row j). Works on 2 A rows x 4 B rows at a time.
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a,
             std::size_t lda, const double* b, std::size_t ldb, double* c,
             std::size_t ldc) {
  const std::size_t k4 = k - k % 4;
  const std::size_t m2 = m - m % 2;
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < m2; i += 2) {
    const double* a0 = a + i * lda;
    const double* a1 = a0 + lda;
    for (std::size_t j = 0; j < n4; j += 4) {
      const double* b0 = b + j * ldb;
      const double* b1 = b0 + ldb;
      const double* b2 = b1 + ldb;
      const double* b3 = b2 + ldb;
      __m256d s00 = _mm256_setzero_pd(), s01 = _mm256_setzero_pd();
      __m256d s02 = _mm256_setzero_pd(), s03 = _mm256_setzero_pd();
      __m256d s10 = _mm256_setzero_pd(), s11 = _mm256_setzero_pd();
      __m256d s12 = _mm256_setzero_pd(), s13 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k4; p += 4) {
        const __m256d x0 = _mm256_loadu_pd(a0 + p);
        const __m256d x1 = _mm256_loadu_pd(a1 + p);
        __m256d y = _mm256_loadu_pd(b0 + p);
        s00 = _mm256_fmadd_pd(x0, y, s00);
        s10 = _mm256_fmadd_pd(x1, y, s10);
        y = _mm256_loadu_pd(b1 + p);
        s01 = _mm256_fmadd_pd(x0, y, s01);
        s11 = _mm256_fmadd_pd(x1, y, s11);
        y = _mm256_loadu_pd(b2 + p);
        s02 = _mm256_fmadd_pd(x0, y, s02);
        s12 = _mm256_fmadd_pd(x1, y, s12);
        y = _mm256_loadu_pd(b3 + p);
        s03 = _mm256_fmadd_pd(x0, y, s03);
        s13 = _mm256_fmadd_pd(x1, y, s13);
      }
      double r[2][4] = {{hsum(s00), hsum(s01), hsum(s02), hsum(s03)},
                        {hsum(s10), hsum(s11), hsum(s12), hsum(s13)}};
      const double* brows[4] = {b0, b1, b2, b3};
      for (std::size_t p = k4; p < k; ++p) {
        for (int q = 0; q < 4; ++q) {
          r[0][q] = __builtin_fma(a0[p], brows[q][p], r[0][q]);
          r[1][q] = __builtin_fma(a1[p], brows[q][p], r[1][q]);
        }
      }
      for (int q = 0; q < 4; ++q) {
        c[i * ldc + j + q] += r[0][q];
        c[(i + 1) * ldc + j + q] += r[1][q];
      }
    }
    for (std::size_t j = n4; j < n; ++j) {
      c[i * ldc + j] += dot(k, a0, b + j * ldb);
      c[(i + 1) * ldc + j] += dot(k, a1, b + j * ldb);
    }
  }
  for (std::size_t i = m2; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * ldc + j] += dot(k, a + i * lda, b + j * ldb);
  }
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  const __m256d av = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    _mm256_storeu_pd(y + i + 4,
                     _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] = __builtin_fma(alpha, x[i], y[i]);
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{"avx2", gemm_nn, gemm_nt, axpy, dot};
  return table;
}

}  // namespace bitforge::kernels
