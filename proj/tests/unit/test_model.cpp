#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "rtd/model.hpp"
#include "support/error_code.hpp"

namespace model = rtd::model;
using rtd::testing::error_code;

namespace {
model::Model from_file(const std::string& name) {
  std::ifstream is(std::string(RTD_TEST_DATA_DIR) + "/" + name);
  return model::Model(model::spec_from_json(nlohmann::json::parse(is)));
}
double at(const model::Model& m, double x) {
  const double p[1] = {x};
  return m.phi(p);
}
}  // namespace

TEST_SUITE("model") {
  TEST_CASE("catalogue") {
    for (const auto& name : {"bm-1", "bm-2", "bm-3", "gauss-strongdrift", "exp-generic", "lebesgue-const-drift",
                             "power-weight"}) {
      const auto m = model::builtin_model(name);
      CHECK(m.dim() >= 1);
    }
    CHECK(error_code([] { model::builtin_model("nope"); }) == "model.UnknownModel");
    CHECK(error_code([] { model::builtin_model("power-weight", {{"zeta", 1.0}}); }) == "model.InvalidParameter");
    CHECK(model::builtin_model("bm-3").dim() == 3);
  }

  TEST_CASE("power weight density") {
    const auto m = model::builtin_model("power-weight", {{"eta", 1.5}});
    const double x[2] = {3.0, 4.0};
    CHECK(m.phi(x) == doctest::Approx(std::pow(5.0, 1.5)));
    CHECK(m.spec().tail_law->gamma == doctest::Approx(3.5));
    // v1 ~ |S^1| r^{d+eta} / (d + eta) with |S^1| = 2 pi.
    CHECK(m.spec().tail_law->C == doctest::Approx(2 * std::numbers::pi / 3.5));
  }

  TEST_CASE("declared flux agrees with phi * B") {
    const auto m = model::builtin_model("exp-generic");
    const double x[1] = {1.7};
    CHECK(m.flux(0, x) == doctest::Approx(m.phi(x) * m.b(0, x)));
    const double far[1] = {800.0};
    CHECK(m.flux(0, far) == doctest::Approx(0.5));
    CHECK(model::validate_model(m).passed);
  }

  TEST_CASE("json round trip and strict keys") {
    const auto s = model::builtin_spec("power-weight", {{"eta", 0.5}, {"swirl", 1.0}});
    const auto j = model::spec_to_json(s);
    const auto back = model::spec_from_json(j);
    CHECK(model::spec_to_json(back) == j);
    CHECK(error_code([] { from_file("unknown_key.json"); }) == "model.UnknownKey");
    nlohmann::json bad = {{"dimension", 4}};
    CHECK(error_code([&] { model::spec_from_json(bad); }) == "model.UnsupportedDimension");
  }

  TEST_CASE("config files") {
    const auto g = from_file("generic_min.json");
    CHECK(at(g, 0.5) == doctest::Approx(1.0));
    CHECK(at(g, -4.0) == doctest::Approx(0.25));
    CHECK_FALSE(g.spec().smooth_phi);
  }

  TEST_CASE("divergence-free check") {
    const auto swirl = from_file("swirl_2d.json");
    CHECK(model::check_divergence_free(swirl, 6, 1e-6).passed);
    const auto pw = model::builtin_model("power-weight", {{"eta", 1.0}, {"swirl", 2.0}});
    CHECK(model::check_divergence_free(pw, 6, 1e-6).passed);
    const auto comp = from_file("compressible_2d.json");
    CHECK_FALSE(model::check_divergence_free(comp, 6, 1e-6).passed);
  }

  TEST_CASE("ellipticity estimate") {
    const auto m = model::builtin_model("bm-2");
    const auto e = model::check_ellipticity(m, {{-1, -1}, {1, 1}}, 64);
    CHECK(e.q_min == doctest::Approx(1.0));
    CHECK(e.q_max == doctest::Approx(1.0));
  }
}
