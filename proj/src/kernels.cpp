#include "qlab/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace qlab::kern {

namespace {

bool avx2_available() {
#if defined(QLAB_HAVE_AVX2)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

bool env_allows_simd() {
  const char* e = std::getenv("QLAB_SIMD");
  return !(e && std::strcmp(e, "0") == 0);
}

std::atomic<int> g_mode{-1};  // -1 undecided, 0 scalar, 1 avx2

int mode() {
  int m = g_mode.load(std::memory_order_relaxed);
  if (m < 0) {
    m = (avx2_available() && env_allows_simd()) ? 1 : 0;
    g_mode.store(m, std::memory_order_relaxed);
  }
  return m;
}

}  // namespace

bool simd_active() { return mode() == 1; }

void force_scalar(bool on) {
  if (on) {
    g_mode.store(0, std::memory_order_relaxed);
  } else {
    g_mode.store(avx2_available() && env_allows_simd() ? 1 : 0,
                 std::memory_order_relaxed);
  }
}

const char* active_isa() { return simd_active() ? "avx2" : "scalar"; }

#if defined(QLAB_HAVE_AVX2)
#define QLAB_DISPATCH(fn, ...) \
  return mode() == 1 ? detail::fn##_avx2(__VA_ARGS__) : detail::fn##_scalar(__VA_ARGS__)
#else
#define QLAB_DISPATCH(fn, ...) return detail::fn##_scalar(__VA_ARGS__)
#endif

double dot(const double* a, const double* b, std::size_t n) {
  QLAB_DISPATCH(dot, a, b, n);
}

double weighted_sumsq(const double* w, const double* x, std::size_t n) {
  QLAB_DISPATCH(weighted_sumsq, w, x, n);
}

double weighted_dot(const double* w, const double* a, const double* b,
                    std::size_t n) {
  QLAB_DISPATCH(weighted_dot, w, a, b, n);
}

void hadamard(double* out, const double* a, const double* x, std::size_t n) {
  QLAB_DISPATCH(hadamard, out, a, x, n);
}

void fma2(double* out, const double* a, const double* x, const double* b,
          const double* y, std::size_t n) {
  QLAB_DISPATCH(fma2, out, a, x, b, y, n);
}

void axpby(double* out, double a, const double* x, double b, const double* y,
           std::size_t n) {
  QLAB_DISPATCH(axpby, out, a, x, b, y, n);
}

void pair_rot(double* u, double* v, const double* e11, const double* e12,
              const double* e21, const double* e22, std::size_t n) {
  QLAB_DISPATCH(pair_rot, u, v, e11, e12, e21, e22, n);
}

void matvec(const double* A, const double* x, double* y, std::size_t rows,
            std::size_t cols) {
  QLAB_DISPATCH(matvec, A, x, y, rows, cols);
}

#undef QLAB_DISPATCH

}  // namespace qlab::kern
