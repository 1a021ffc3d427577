#include "qlab/kernels.hpp"

// Reference kernels. Deliberately plain loops: these define the semantics the
// SIMD variants are tested against.

namespace qlab::kern::detail {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double weighted_sumsq_scalar(const double* w, const double* x, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i] * x[i] * x[i];
  return s;
}

double weighted_dot_scalar(const double* w, const double* a, const double* b,
                           std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i] * a[i] * b[i];
  return s;
}

void hadamard_scalar(double* out, const double* a, const double* x,
                     std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * x[i];
}

void fma2_scalar(double* out, const double* a, const double* x,
                 const double* b, const double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * x[i] + b[i] * y[i];
}

void axpby_scalar(double* out, double a, const double* x, double b,
                  const double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void pair_rot_scalar(double* u, double* v, const double* e11, const double* e12,
                     const double* e21, const double* e22, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double ui = u[i], vi = v[i];
    u[i] = e11[i] * ui + e12[i] * vi;
    v[i] = e21[i] * ui + e22[i] * vi;
  }
}

void matvec_scalar(const double* A, const double* x, double* y,
                   std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = A + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += row[c] * x[c];
    y[r] = s;
  }
}

}  // namespace qlab::kern::detail
