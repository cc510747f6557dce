#include <doctest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "rtd/model.hpp"
#include "rtd/scale_1d.hpp"
#include "support/error_code.hpp"

namespace model = rtd::model;
namespace scale1d = rtd::scale1d;
using rtd::criteria::Verdict;
using rtd::testing::error_code;

TEST_SUITE("scale_1d") {
  TEST_CASE("exponential weight with constant flux") {
    const auto m = model::builtin_model("exp-generic");
    const auto d = scale1d::symmetrize_model(m);
    // (phi' + 2b)/phi = -1 + e^x on x > 0, so log phi~ = e^x - 1 - x.
    for (double x : {0.5, 2.0, 5.0, 9.0}) CHECK(d->log_value(x) == doctest::Approx(std::expm1(x) - x).epsilon(1e-10));
    // x < 0: phi' = phi, so log phi~ = x + 1 - e^{-x}.
    CHECK(d->log_value(-2.0) == doctest::Approx(-2.0 + 1.0 - std::exp(2.0)).epsilon(1e-10));
    const auto r = scale1d::test_not_recurrent_1d(d);
    // int_0^inf e^x exp(1 - e^x) dx = 1
    CHECK(r.plus.status == scale1d::TailStatus::Convergent);
    CHECK(r.plus.value == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.minus.status == scale1d::TailStatus::Divergent);
    CHECK(r.verdict == Verdict::NotRecurrent);
  }

  TEST_CASE("constant drift on Lebesgue measure") {
    const auto d = scale1d::symmetrize_density([](double) { return 1.0; }, [](double) { return 0.0; }, 1.0, 0.5);
    // phi~ = e^{2x}: int_0^inf e^{-2x} = 1/2, the other side diverges.
    const auto r = scale1d::test_not_recurrent_1d(d);
    CHECK(r.plus.value == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(r.minus.status == scale1d::TailStatus::Divergent);
  }

  TEST_CASE("no drift leaves both sides divergent") {
    const auto d = scale1d::symmetrize_density([](double) { return 1.0; }, [](double) { return 0.0; }, 0.0, 0.5);
    const auto r = scale1d::test_not_recurrent_1d(d);
    CHECK(r.plus.status == scale1d::TailStatus::Divergent);
    CHECK(r.verdict == Verdict::Inconclusive);
  }

  TEST_CASE("power-law tails") {
    // phi = 1 + x^2, b = 0: phi~ = phi and int_0^inf 1/phi~ = pi/2.
    const auto d = scale1d::symmetrize_density([](double x) { return 1 + x * x; }, [](double x) { return 2 * x; }, 0.0);
    const auto r = scale1d::test_not_recurrent_1d(d);
    CHECK(r.plus.status == scale1d::TailStatus::Convergent);
    CHECK(r.plus.value == doctest::Approx(std::atan(1.0) * 2).epsilon(1e-6));
  }

  TEST_CASE("kinked weight from a config file") {
    std::ifstream is(std::string(RTD_TEST_DATA_DIR) + "/generic_min.json");
    const model::Model m(model::spec_from_json(nlohmann::json::parse(is)));
    const auto g = scale1d::generic_form(m);
    CHECK(g.b == doctest::Approx(0.5));
    CHECK(g.a == doctest::Approx(0.5));
    // 1/phi~ = e^{-x} on [0,1] and x exp(-(x^2+1)/2) beyond: I+ = (1 - 1/e) + 1/e = 1.
    const auto res = scale1d::classify_1d(m);
    CHECK(res.scale.plus.value == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(res.classification.verdict == Verdict::NotRecurrent);
  }

  TEST_CASE("unsupported models") {
    CHECK(error_code([] { scale1d::generic_form(model::builtin_model("bm-2")); }) == "scale_1d.InvalidDimension");
    const model::Model ou(model::spec_from_json(nlohmann::json{{"dimension", 1}, {"B", {"-x1"}}}));
    CHECK(error_code([&] { scale1d::generic_form(ou); }) == "scale_1d.UnsupportedModel");
  }

  TEST_CASE("superexponential drift") {
    // phi = e^{-x^2}, phi B = -6, a = 1: (log phi~)' = -2x - 6 e^{x^2}, so 1/phi~ is integrable on the left.
    const auto res = scale1d::classify_1d(model::builtin_model("gauss-strongdrift"));
    CHECK(res.scale.minus.status == scale1d::TailStatus::Convergent);
    CHECK(res.scale.plus.status == scale1d::TailStatus::Divergent);
    CHECK(res.classification.verdict == Verdict::NotRecurrent);
  }

  TEST_CASE("classification pipeline") {
    const auto res = scale1d::classify_1d(model::builtin_model("lebesgue-const-drift"));
    CHECK(res.classification.verdict == Verdict::NotRecurrent);
    CHECK(res.scale.plus.value == doctest::Approx(0.5).epsilon(1e-9));
  }
}
