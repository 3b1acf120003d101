#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "structce/numerics.hpp"

using namespace structce;
using namespace structce::numerics;

TEST_CASE("cmod basic values") {
  CHECK(cmod(0.3, 2.0) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(cmod(1.0, 2.0) == -1.0);   // half-period tie resolves downward
  CHECK(cmod(-1.0, 2.0) == -1.0);  // both levels map to the same residue
  CHECK(cmod(7.4, 2.0) == doctest::Approx(cmod(-0.6, 2.0)).epsilon(1e-12));
  CHECK(cmod(7.4, 2.0) == doctest::Approx(-0.6).epsilon(1e-12));
  CHECK_THROWS_AS(cmod(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(cmod(1.0, -2.0), std::invalid_argument);
}

TEST_CASE("cmod lattice periodicity and range") {
  RngStream rng(42, 1);
  // exact for power-of-two periods, on a dyadic grid of u so that u + k*p is
  // itself exactly representable
  for (double p : {0.5, 2.0, 1024.0}) {
    for (int trial = 0; trial < 200; ++trial) {
      const double u =
          (static_cast<double>(rng.next_below(1 << 16)) / (1 << 15) - 1.0) * (p / 2);
      const long long k = static_cast<long long>(rng.next_below(2001)) - 1000;
      CHECK(cmod(u + k * p, p) == cmod(u, p));
    }
  }
  // within 1e-12 for general periods, result always in [-p/2, p/2)
  for (double p : {std::sqrt(2.0), 2.0 / std::sqrt(10.0), 3.7}) {
    for (int trial = 0; trial < 500; ++trial) {
      const double u = (rng.next_double() - 0.5) * 2000.0;
      const long long k = static_cast<long long>(rng.next_below(2001)) - 1000;
      CHECK(std::abs(cmod(u + k * p, p) - cmod(u, p)) <= 1e-12);
      const double r = cmod(u, p);
      CHECK(r >= -p / 2);
      CHECK(r < p / 2);
    }
  }
}

TEST_CASE("solve_hermitian identity and residual") {
  CMat eye = CMat::Identity(2, 2);
  CVec b(2);
  b << cd(1, 1), cd(2, 0);
  CVec x = solve_hermitian(eye, b);
  CHECK((x - b).norm() == doctest::Approx(0.0).epsilon(1e-14));

  RngStream rng(7, 2);
  CMat m(4, 4);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) m(i, j) = rng.next_cgaussian(1.0);
  }
  CMat a = m.adjoint() * m + CMat::Identity(4, 4);
  CVec rhs(4);
  for (int i = 0; i < 4; ++i) rhs(i) = rng.next_cgaussian(1.0);
  CVec sol = solve_hermitian(a, rhs);
  CHECK((a * sol - rhs).norm() / rhs.norm() <= 1e-10);
}

TEST_CASE("solve_hermitian error cases") {
  CMat singular(2, 2);
  singular << cd(1, 0), cd(1, 0), cd(1, 0), cd(1, 0);  // zero eigenvalue
  CVec b(2);
  b << cd(1, 0), cd(1, 0);
  CHECK_THROWS_AS(solve_hermitian(singular, b), SingularMatrixError);

  CMat skew(2, 2);
  skew << cd(1, 0), cd(0, 1), cd(0, 1), cd(1, 0);  // not Hermitian
  CHECK_THROWS_AS(solve_hermitian(skew, b), std::invalid_argument);
}

TEST_CASE("lstsq recovers exact and consistent systems") {
  CMat eye = CMat::Identity(3, 3);
  CVec b(3);
  b << cd(0.5, -1), cd(2, 3), cd(-1, 0);
  CHECK((lstsq(eye, b) - b).norm() <= 1e-12);

  RngStream rng(9, 3);
  CMat a(6, 3);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 3; ++j) a(i, j) = rng.next_cgaussian(1.0);
  }
  CVec xstar(3);
  for (int j = 0; j < 3; ++j) xstar(j) = rng.next_cgaussian(1.0);
  CVec rhs = a * xstar;
  CHECK((lstsq(a, rhs) - xstar).norm() <= 1e-10);

  // normal-equations residual bound on a noisy system
  CVec noisy = rhs;
  for (int i = 0; i < 6; ++i) noisy(i) += rng.next_cgaussian(0.1);
  CVec fit = lstsq(a, noisy);
  CHECK((a.adjoint() * (a * fit - noisy)).norm() <= 1e-9 * (a.adjoint() * noisy).norm());
}

TEST_CASE("lstsq error cases") {
  CMat a(4, 2);
  RngStream rng(11, 4);
  for (int i = 0; i < 4; ++i) {
    a(i, 0) = rng.next_cgaussian(1.0);
    a(i, 1) = a(i, 0);  // duplicated column
  }
  CVec b(4);
  for (int i = 0; i < 4; ++i) b(i) = rng.next_cgaussian(1.0);
  CHECK_THROWS_AS(lstsq(a, b), SingularMatrixError);

  CMat wide(2, 3);
  wide.setZero();
  CVec b2(2);
  b2.setZero();
  CHECK_THROWS_AS(lstsq(wide, b2), std::invalid_argument);
}

TEST_CASE("finite differences match analytic gradients") {
  auto norm2 = [](const std::vector<double>& x) {
    double s = 0;
    for (double v : x) s += v * v;
    return s;
  };
  auto g = finite_diff_grad(norm2, {1.0, 2.0}, 1e-5);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(g[1] == doctest::Approx(4.0).epsilon(1e-8));

  // binary cross-entropy of a fixed logistic unit: L(w) = -log sigma(w.x) for
  // a +1 label, gradient -(1 - sigma(w.x)) x
  const std::vector<double> feat = {0.7, -1.3, 0.4};
  auto bce = [&](const std::vector<double>& w) {
    double s = 0;
    for (int i = 0; i < 3; ++i) s += w[i] * feat[i];
    return std::log1p(std::exp(-s));
  };
  const std::vector<double> w0 = {0.3, 0.1, -0.2};
  auto gf = finite_diff_grad(bce, w0, 1e-6);
  double s = 0;
  for (int i = 0; i < 3; ++i) s += w0[i] * feat[i];
  const double sig = 1.0 / (1.0 + std::exp(-s));
  for (int i = 0; i < 3; ++i) {
    CHECK(gf[i] == doctest::Approx(-(1.0 - sig) * feat[i]).epsilon(1e-6));
  }

  auto constant = [](const std::vector<double>&) { return 3.5; };
  for (double v : finite_diff_grad(constant, {1, 2, 3}, 1e-5)) CHECK(v == 0.0);
}

TEST_CASE("rng streams are reproducible and decorrelated") {
  RngStream a(123, 5);
  RngStream b(123, 5);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(a.next_gaussian() == b.next_gaussian());
  CHECK(a.next_double() == b.next_double());

  RngStream c(123, 6);
  int same = 0;
  RngStream a2(123, 5);
  for (int i = 0; i < 64; ++i) same += a2.next_u64() == c.next_u64();
  CHECK(same == 0);

  // substreams: deterministic and distinct from the parent
  RngStream parent(9, 0);
  auto s1 = parent.substream(1);
  auto s2 = parent.substream(1);
  auto s3 = parent.substream(2);
  CHECK(s1.next_u64() == s2.next_u64());
  CHECK(s1.next_u64() != s3.next_u64());
}

TEST_CASE("rng distributions behave") {
  RngStream rng(2024, 0);
  for (int i = 0; i < 1000; ++i) {
    auto v = rng.next_below(13);
    CHECK(v < 13);
  }
  double mean = 0, var = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double g = rng.next_gaussian();
    mean += g;
    var += g * g;
  }
  mean /= n;
  var = var / n - mean * mean;
  CHECK(std::abs(mean) < 0.03);
  CHECK(var == doctest::Approx(1.0).epsilon(0.05));

  double cvar = 0;
  for (int i = 0; i < n; ++i) cvar += std::norm(rng.next_cgaussian(0.5));
  CHECK(cvar / n == doctest::Approx(0.5).epsilon(0.05));
}
