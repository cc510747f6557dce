#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "rtd/model.hpp"
#include "rtd/volume_growth.hpp"
#include "support/error_code.hpp"

namespace model = rtd::model;
namespace volume = rtd::volume;
using std::numbers::pi;

TEST_SUITE("volume") {
  TEST_CASE("Brownian volumes are ball volumes") {
    const auto m2 = model::builtin_model("bm-2");
    const auto m3 = model::builtin_model("bm-3");
    for (double r : {0.5, 1.0, 7.0, 120.0}) {
      CHECK(volume::eval_v1(m2, r).value == doctest::Approx(pi * r * r).epsilon(1e-8));
      CHECK(volume::eval_v1(m3, r).value == doctest::Approx(4.0 / 3.0 * pi * r * r * r).epsilon(1e-8));
      CHECK(volume::eval_v2(m2, r).value == 0.0);
    }
  }

  TEST_CASE("full cubature agrees with the radial reduction") {
    const auto m = model::builtin_model("power-weight", {{"eta", 0.5}});
    volume::Options full;
    full.method = volume::Method::Full;
    for (double r : {1.0, 3.0}) {
      const double exact = 2 * pi * std::pow(r, 2.5) / 2.5;
      CHECK(volume::eval_v1(m, r).value == doctest::Approx(exact).epsilon(1e-7));
      CHECK(volume::eval_v1(m, r, full).value == doctest::Approx(exact).epsilon(1e-5));
    }
  }

  TEST_CASE("one-dimensional drift volumes") {
    // phi = 1, a = 1/2, b = 1: v1 = 2 a r = r and v2 = int_{-r}^{r} |x| dx = r^2.
    const auto m = model::builtin_model("lebesgue-const-drift");
    CHECK(volume::eval_v1(m, 3.0).value == doctest::Approx(3.0));
    CHECK(volume::eval_v2(m, 3.0).value == doctest::Approx(9.0));
    // phi = e^{-|x|}: v1 = 1 - e^{-r}, v2 = r^2 / 2 from the constant flux 1/2.
    const auto e = model::builtin_model("exp-generic");
    CHECK(volume::eval_v1(e, 2.0).value == doctest::Approx(1.0 - std::exp(-2.0)));
    CHECK(volume::eval_v2(e, 900.0).value == doctest::Approx(900.0 * 900.0 / 2.0));
  }

  TEST_CASE("profiles interpolate monotonically") {
    const auto m = model::builtin_model("bm-2");
    const auto p = volume::build_profile(m, volume::Kind::V1, 1e3, 60);
    CHECK(p.covers(1.0, 1e3));
    for (double r : {1.3, 17.0, 640.0}) {
      CHECK(p(r) == doctest::Approx(pi * r * r).epsilon(1e-6));
      CHECK(p.derivative(r) == doctest::Approx(2 * pi * r).epsilon(1e-4));
    }
    CHECK(rtd::testing::error_code([&] { (void)p(2e3); }) == "volume.DomainExceeded");
  }

  TEST_CASE("a_n for planar growth") {
    const auto m = model::builtin_model("bm-2");
    const auto prof = volume::build_profiles_on(m, volume::default_grid(1e4));
    const auto a = volume::compute_a(prof.v, {1.0, 10.0, 100.0, 1e4});
    // int_1^n r / (pi r^2) dr = log(n) / pi
    for (std::size_t i = 0; i < a.n.size(); ++i) CHECK(a.a[i] == doctest::Approx(std::log(a.n[i]) / pi).epsilon(1e-7));
  }

  TEST_CASE("mollification residual shrinks with eps") {
    const auto m = model::builtin_model("bm-2");
    const auto v1 = volume::build_profile(m, volume::Kind::V1, 10.0, 80, {}, 0.5);
    const auto res = volume::mollify_check(v1, 4.0, {1e-2, 1e-3, 1e-4});
    // 2 a_4 + 1/v1(1) - 16/v1(4) with a_4 = log 4 / pi.
    CHECK(res.rhs == doctest::Approx(2 * std::log(4.0) / pi + 1 / pi - 1 / pi).epsilon(1e-8));
    CHECK(res.residual[1] < 1e-3);
    CHECK(res.residual[0] >= 10 * res.residual[2]);
  }

  TEST_CASE("csv output") {
    const auto m = model::builtin_model("bm-1");
    const auto prof = volume::build_profiles_on(m, {1.0, 2.0, 4.0});
    std::ostringstream os;
    volume::write_profiles_csv(os, prof);
    CHECK(os.str().rfind("r,v1,v2,v", 0) == 0);
  }
}
