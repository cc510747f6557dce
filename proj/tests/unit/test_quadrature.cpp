#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "rtd/quadrature.hpp"
#include "support/error_code.hpp"

namespace quad = rtd::quad;
using std::numbers::pi;

TEST_SUITE("quadrature") {
  TEST_CASE("one-dimensional rules") {
    CHECK(quad::integrate([](double x) { return x * x; }, 0.0, 1.0).value == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(quad::integrate([](double x) { return std::exp(-x); }, 0.0, 30.0).value ==
          doctest::Approx(1.0 - std::exp(-30.0)).epsilon(1e-10));
    const double brk[] = {0.0};
    const auto r = quad::integrate([](double x) { return std::fabs(x); }, -1.0, 1.0, {}, brk);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(r.error < 1e-10);
  }

  TEST_CASE("integrable endpoint singularity") {
    quad::Options o;
    o.rel_tol = 1e-9;
    CHECK(quad::integrate([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0, o).value ==
          doctest::Approx(2.0).epsilon(1e-7));
  }

  TEST_CASE("spherical integration over balls") {
    auto unit = [](std::span<const double>) { return std::make_pair(0.0, 1.0); };
    const double c1[] = {0.0}, c2[] = {0.0, 0.0}, c3[] = {0.0, 0.0, 0.0};
    CHECK(quad::integrate_spherical(1, c1, [](std::span<const double>) { return 1.0; }, unit).value ==
          doctest::Approx(2.0));
    CHECK(quad::integrate_spherical(2, c2, [](std::span<const double>) { return 1.0; }, unit).value ==
          doctest::Approx(pi).epsilon(1e-9));
    auto r2 = [](std::span<const double> x) { return x[0] * x[0] + x[1] * x[1] + x[2] * x[2]; };
    CHECK(quad::integrate_spherical(3, c3, r2, unit).value == doctest::Approx(4.0 * pi / 5.0).epsilon(1e-8));
    // Off-centre integrand: int_{disk} x1^2 = pi/4.
    CHECK(quad::integrate_spherical(2, c2, [](std::span<const double> x) { return x[0] * x[0]; }, unit).value ==
          doctest::Approx(pi / 4.0).epsilon(1e-9));
  }

  TEST_CASE("non-finite samples are reported") {
    CHECK(rtd::testing::error_code([] {
            quad::integrate([](double x) { return x < 0.5 ? 1.0 : NAN; }, 0.0, 1.0);
          }) == "volume.NonFinite");
  }
}
