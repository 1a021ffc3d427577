#pragma once

#include <cstddef>

// Low-level array kernels used by the spectral operators, integrators and the
// action evaluator. Every kernel has a scalar reference implementation and,
// on x86-64 builds, an AVX2+FMA variant. The active variant is chosen once at
// runtime from CPUID; tests can force the scalar path via force_scalar() or by
// setting the environment variable QLAB_SIMD=0 before first use.

namespace qlab::kern {

// ---- reductions -----------------------------------------------------------

// sum_i a[i]*b[i]
double dot(const double* a, const double* b, std::size_t n);

// sum_i w[i]*x[i]*x[i]
double weighted_sumsq(const double* w, const double* x, std::size_t n);

// sum_i w[i]*a[i]*b[i]
double weighted_dot(const double* w, const double* a, const double* b,
                    std::size_t n);

// ---- elementwise maps ------------------------------------------------------

// out[i] = a[i]*x[i]   (out may alias x)
void hadamard(double* out, const double* a, const double* x, std::size_t n);

// out[i] = a[i]*x[i] + b[i]*y[i]   (out may alias x or y)
void fma2(double* out, const double* a, const double* x, const double* b,
          const double* y, std::size_t n);

// out[i] = a*x[i] + b*y[i]   (scalar coefficients; out may alias x or y)
void axpby(double* out, double a, const double* x, double b, const double* y,
           std::size_t n);

// In-place per-index 2x2 matrix application across mode arrays:
//   (u[i], v[i]) <- (e11[i]*u[i] + e12[i]*v[i], e21[i]*u[i] + e22[i]*v[i])
void pair_rot(double* u, double* v, const double* e11, const double* e12,
              const double* e21, const double* e22, std::size_t n);

// Dense row-major matrix-vector product y = A x with A of shape rows x cols.
// y must not alias A or x.
void matvec(const double* A, const double* x, double* y, std::size_t rows,
            std::size_t cols);

// ---- dispatch control ------------------------------------------------------

bool simd_active();            // true when the AVX2 variants are in use
void force_scalar(bool on);    // tests: toggle the scalar reference path
const char* active_isa();      // "avx2" or "scalar"

namespace detail {
// Scalar reference implementations (always compiled; used directly by the
// equivalence tests).
double dot_scalar(const double*, const double*, std::size_t);
double weighted_sumsq_scalar(const double*, const double*, std::size_t);
double weighted_dot_scalar(const double*, const double*, const double*,
                           std::size_t);
void hadamard_scalar(double*, const double*, const double*, std::size_t);
void fma2_scalar(double*, const double*, const double*, const double*,
                 const double*, std::size_t);
void axpby_scalar(double*, double, const double*, double, const double*,
                  std::size_t);
void pair_rot_scalar(double*, double*, const double*, const double*,
                     const double*, const double*, std::size_t);
void matvec_scalar(const double*, const double*, double*, std::size_t,
                   std::size_t);

#if defined(QLAB_HAVE_AVX2)
double dot_avx2(const double*, const double*, std::size_t);
double weighted_sumsq_avx2(const double*, const double*, std::size_t);
double weighted_dot_avx2(const double*, const double*, const double*,
                         std::size_t);
void hadamard_avx2(double*, const double*, const double*, std::size_t);
void fma2_avx2(double*, const double*, const double*, const double*,
               const double*, std::size_t);
void axpby_avx2(double*, double, const double*, double, const double*,
                std::size_t);
void pair_rot_avx2(double*, double*, const double*, const double*,
                   const double*, const double*, std::size_t);
void matvec_avx2(const double*, const double*, double*, std::size_t,
                 std::size_t);
#endif
}  // namespace detail

}  // namespace qlab::kern
