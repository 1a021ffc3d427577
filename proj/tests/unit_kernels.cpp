#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "qlab/kernels.hpp"
#include "qlab/rng.hpp"

namespace {

std::vector<double> random_vec(std::size_t n, qlab::CounterRng& rng,
                               double scale = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.next_normal();
  return v;
}

constexpr std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 31, 33, 100, 257};

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("dispatch control: force_scalar toggles the active ISA") {
  using namespace qlab::kern;
  force_scalar(true);
  CHECK_FALSE(simd_active());
  CHECK(std::string(active_isa()) == "scalar");
  force_scalar(false);
  // After un-forcing, the ISA is whatever the CPU supports; both are legal,
  // but the reported name must be consistent with simd_active().
  if (simd_active())
    CHECK(std::string(active_isa()) == "avx2");
  else
    CHECK(std::string(active_isa()) == "scalar");
}

TEST_CASE("reductions agree with the scalar reference on every size") {
  using namespace qlab::kern;
  qlab::CounterRng rng(2024, 1, 0);
  force_scalar(false);
  for (std::size_t n : kSizes) {
    auto a = random_vec(n, rng), b = random_vec(n, rng), w = random_vec(n, rng);
    const double d_active = dot(a.data(), b.data(), n);
    const double d_ref = detail::dot_scalar(a.data(), b.data(), n);
    CHECK(d_active == doctest::Approx(d_ref).epsilon(1e-13));

    const double s_active = weighted_sumsq(w.data(), a.data(), n);
    const double s_ref = detail::weighted_sumsq_scalar(w.data(), a.data(), n);
    CHECK(s_active == doctest::Approx(s_ref).epsilon(1e-13));

    const double wd_active = weighted_dot(w.data(), a.data(), b.data(), n);
    const double wd_ref =
        detail::weighted_dot_scalar(w.data(), a.data(), b.data(), n);
    CHECK(wd_active == doctest::Approx(wd_ref).epsilon(1e-13));
  }
}

TEST_CASE("dot matches long-double accumulation") {
  qlab::CounterRng rng(7, 0, 0);
  for (std::size_t n : {16u, 100u, 257u}) {
    auto a = random_vec(n, rng), b = random_vec(n, rng);
    long double acc = 0.0L;
    for (std::size_t i = 0; i < n; ++i)
      acc += static_cast<long double>(a[i]) * static_cast<long double>(b[i]);
    CHECK(qlab::kern::dot(a.data(), b.data(), n) ==
          doctest::Approx(static_cast<double>(acc)).epsilon(1e-12));
  }
}

TEST_CASE("elementwise maps agree with the scalar reference") {
  using namespace qlab::kern;
  qlab::CounterRng rng(11, 3, 0);
  force_scalar(false);
  for (std::size_t n : kSizes) {
    auto a = random_vec(n, rng), x = random_vec(n, rng), b = random_vec(n, rng),
         y = random_vec(n, rng);
    std::vector<double> o1(n), o2(n);

    hadamard(o1.data(), a.data(), x.data(), n);
    detail::hadamard_scalar(o2.data(), a.data(), x.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(o1[i] == doctest::Approx(o2[i]).epsilon(1e-14));

    fma2(o1.data(), a.data(), x.data(), b.data(), y.data(), n);
    detail::fma2_scalar(o2.data(), a.data(), x.data(), b.data(), y.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(o1[i] == doctest::Approx(o2[i]).epsilon(1e-14));

    axpby(o1.data(), 0.75, x.data(), -1.25, y.data(), n);
    detail::axpby_scalar(o2.data(), 0.75, x.data(), -1.25, y.data(), n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(o1[i] == doctest::Approx(o2[i]).epsilon(1e-14));
  }
}

TEST_CASE("aliasing contracts: out may alias x / y") {
  using namespace qlab::kern;
  qlab::CounterRng rng(5, 5, 5);
  const std::size_t n = 33;
  auto a = random_vec(n, rng), x0 = random_vec(n, rng), b = random_vec(n, rng),
       y0 = random_vec(n, rng);
  std::vector<double> ref(n);
  detail::fma2_scalar(ref.data(), a.data(), x0.data(), b.data(), y0.data(), n);
  auto x = x0;
  fma2(x.data(), a.data(), x.data(), b.data(), y0.data(), n);  // out == x
  for (std::size_t i = 0; i < n; ++i)
    CHECK(x[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  auto y = y0;
  fma2(y.data(), a.data(), x0.data(), b.data(), y.data(), n);  // out == y
  for (std::size_t i = 0; i < n; ++i)
    CHECK(y[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  auto h = x0;
  hadamard(h.data(), a.data(), h.data(), n);
  std::vector<double> href(n);
  detail::hadamard_scalar(href.data(), a.data(), x0.data(), n);
  for (std::size_t i = 0; i < n; ++i)
    CHECK(h[i] == doctest::Approx(href[i]).epsilon(1e-14));
}

TEST_CASE("pair_rot equals the per-index 2x2 product") {
  using namespace qlab::kern;
  qlab::CounterRng rng(13, 1, 1);
  for (std::size_t n : kSizes) {
    auto u0 = random_vec(n, rng), v0 = random_vec(n, rng);
    auto e11 = random_vec(n, rng), e12 = random_vec(n, rng),
         e21 = random_vec(n, rng), e22 = random_vec(n, rng);
    auto u = u0, v = v0;
    pair_rot(u.data(), v.data(), e11.data(), e12.data(), e21.data(),
             e22.data(), n);
    auto us = u0, vs = v0;
    detail::pair_rot_scalar(us.data(), vs.data(), e11.data(), e12.data(),
                            e21.data(), e22.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      const double uu = e11[i] * u0[i] + e12[i] * v0[i];
      const double vv = e21[i] * u0[i] + e22[i] * v0[i];
      CHECK(u[i] == doctest::Approx(uu).epsilon(1e-13));
      CHECK(v[i] == doctest::Approx(vv).epsilon(1e-13));
      CHECK(u[i] == doctest::Approx(us[i]).epsilon(1e-14));
      CHECK(v[i] == doctest::Approx(vs[i]).epsilon(1e-14));
    }
  }
}

TEST_CASE("matvec agrees with the naive triple loop and the scalar variant") {
  using namespace qlab::kern;
  qlab::CounterRng rng(17, 2, 9);
  for (std::size_t rows : {1u, 3u, 8u, 31u}) {
    for (std::size_t cols : {1u, 4u, 7u, 32u}) {
      auto A = random_vec(rows * cols, rng);
      auto x = random_vec(cols, rng);
      std::vector<double> y(rows), yref(rows), ys(rows);
      matvec(A.data(), x.data(), y.data(), rows, cols);
      detail::matvec_scalar(A.data(), x.data(), ys.data(), rows, cols);
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += A[r * cols + c] * x[c];
        yref[r] = acc;
      }
      for (std::size_t r = 0; r < rows; ++r) {
        CHECK(y[r] == doctest::Approx(yref[r]).epsilon(1e-12));
        CHECK(ys[r] == doctest::Approx(yref[r]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("forced-scalar results are bitwise equal to the reference") {
  using namespace qlab::kern;
  qlab::CounterRng rng(23, 0, 4);
  const std::size_t n = 100;
  auto a = random_vec(n, rng), b = random_vec(n, rng);
  force_scalar(true);
  const double d_forced = dot(a.data(), b.data(), n);
  force_scalar(false);
  CHECK(d_forced == detail::dot_scalar(a.data(), b.data(), n));
}

}  // TEST_SUITE
