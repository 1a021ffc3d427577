#include "qlab/kernels.hpp"

#if defined(QLAB_HAVE_AVX2)

#include <immintrin.h>

// AVX2+FMA kernels, 4 doubles per lane, scalar remainder loops. Horizontal
// reductions sum the 256-bit accumulator pairwise so results are within a few
// ulp of (not bit-identical to) the scalar reference; equivalence tests use a
// relative tolerance.

namespace qlab::kern::detail {

namespace {

inline double hsum256(__m256d acc) {
  __m128d lo = _mm256_castpd256_pd128(acc);
  __m128d hi = _mm256_extractf128_pd(acc, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swap = _mm_unpackhi_pd(lo, lo);
  lo = _mm_add_sd(lo, swap);
  return _mm_cvtsd_f64(lo);
}

}  // namespace

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
  }
  double s = hsum256(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_sumsq_avx2(const double* w, const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(_mm256_mul_pd(_mm256_loadu_pd(w + i), xv), xv, acc);
  }
  double s = hsum256(acc);
  for (; i < n; ++i) s += w[i] * x[i] * x[i];
  return s;
}

double weighted_dot_avx2(const double* w, const double* a, const double* b,
                         std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d wa = _mm256_mul_pd(_mm256_loadu_pd(w + i), _mm256_loadu_pd(a + i));
    acc = _mm256_fmadd_pd(wa, _mm256_loadu_pd(b + i), acc);
  }
  double s = hsum256(acc);
  for (; i < n; ++i) s += w[i] * a[i] * b[i];
  return s;
}

void hadamard_avx2(double* out, const double* a, const double* x,
                   std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * x[i];
}

void fma2_avx2(double* out, const double* a, const double* x, const double* b,
               const double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d ax = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(out + i,
                     _mm256_fmadd_pd(_mm256_loadu_pd(b + i),
                                     _mm256_loadu_pd(y + i), ax));
  }
  for (; i < n; ++i) out[i] = a[i] * x[i] + b[i] * y[i];
}

void axpby_avx2(double* out, double a, const double* x, double b,
                const double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  const __m256d bv = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d ax = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(bv, _mm256_loadu_pd(y + i), ax));
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void pair_rot_avx2(double* u, double* v, const double* e11, const double* e12,
                   const double* e21, const double* e22, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d ui = _mm256_loadu_pd(u + i);
    const __m256d vi = _mm256_loadu_pd(v + i);
    const __m256d nu = _mm256_fmadd_pd(_mm256_loadu_pd(e12 + i), vi,
                                       _mm256_mul_pd(_mm256_loadu_pd(e11 + i), ui));
    const __m256d nv = _mm256_fmadd_pd(_mm256_loadu_pd(e22 + i), vi,
                                       _mm256_mul_pd(_mm256_loadu_pd(e21 + i), ui));
    _mm256_storeu_pd(u + i, nu);
    _mm256_storeu_pd(v + i, nv);
  }
  for (; i < n; ++i) {
    const double ui = u[i], vi = v[i];
    u[i] = e11[i] * ui + e12[i] * vi;
    v[i] = e21[i] * ui + e22[i] * vi;
  }
}

void matvec_avx2(const double* A, const double* x, double* y, std::size_t rows,
                 std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = A + r * cols;
    __m256d acc = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(row + c), _mm256_loadu_pd(x + c),
                            acc);
    }
    double s = hsum256(acc);
    for (; c < cols; ++c) s += row[c] * x[c];
    y[r] = s;
  }
}

}  // namespace qlab::kern::detail

#endif  // QLAB_HAVE_AVX2
