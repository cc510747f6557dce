#include <doctest.h>

#include <cmath>
#include <vector>

#include "rtd/fit.hpp"

namespace fit = rtd::fit;

TEST_SUITE("fit") {
  TEST_CASE("exact line") {
    const std::vector<double> x{0, 1, 2, 3, 4}, y{1, 3, 5, 7, 9};
    const auto f = fit::linear(x, y);
    CHECK(f.intercept == doctest::Approx(1.0));
    CHECK(f.slope == doctest::Approx(2.0));
    CHECK(f.r2 == doctest::Approx(1.0));
  }

  TEST_CASE("growth laws are told apart") {
    std::vector<double> n, lg, pw, bd;
    for (int k = 0; k <= 40; ++k) {
      const double v = std::pow(10.0, 1.0 + k / 10.0);
      n.push_back(v);
      lg.push_back(3.0 + 2.0 * std::log(v));
      pw.push_back(1.0 + 0.5 * std::pow(v, 0.7));
      bd.push_back(4.0 - 2.0 / v);
    }
    const auto a = fit::fit_growth_law(n, lg);
    CHECK(a.kind == fit::LawKind::Log);
    CHECK(a.c1 == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(a.unbounded());
    const auto b = fit::fit_growth_law(n, pw);
    CHECK(b.kind == fit::LawKind::Power);
    CHECK(b.p == doctest::Approx(0.7).epsilon(1e-3));
    const auto c = fit::fit_growth_law(n, bd);
    CHECK(c.kind == fit::LawKind::Bounded);
    CHECK_FALSE(c.unbounded());
    CHECK(c.c0 == doctest::Approx(4.0).epsilon(1e-6));
  }
}
