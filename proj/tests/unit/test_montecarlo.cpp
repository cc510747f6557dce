#include <doctest.h>

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "rtd/model.hpp"
#include "rtd/montecarlo.hpp"
#include "support/error_code.hpp"

namespace mc = rtd::mc;
namespace model = rtd::model;
using rtd::testing::error_code;

namespace {
model::Model from_file(const std::string& name) {
  std::ifstream is(std::string(RTD_TEST_DATA_DIR) + "/" + name);
  return model::Model(model::spec_from_json(nlohmann::json::parse(is)));
}
}  // namespace

TEST_SUITE("montecarlo") {
  TEST_CASE("Ito coefficients") {
    const auto bm = mc::derive_sde(model::builtin_model("bm-2"));
    double x[2] = {0.3, -1.0}, b[2], s[4];
    bm.drift(x, b);
    REQUIRE(mc::sigma_factor(bm, x, s));
    CHECK(b[0] == 0.0);
    CHECK(s[0] == doctest::Approx(std::sqrt(2.0)));
    CHECK(s[3] == doctest::Approx(std::sqrt(2.0)));
    CHECK(bm.constant);

    // phi = exp(-x^2), A = 1: b = phi'/phi = -2x, sigma = sqrt 2.
    const auto g = mc::derive_sde(from_file("gauss_weight.json"));
    double y = 0.7, by, sy;
    g.drift(&y, &by);
    mc::sigma_factor(g, &y, &sy);
    CHECK(by == doctest::Approx(-1.4));
    CHECK(sy == doctest::Approx(std::sqrt(2.0)));

    // a = 1: b(x) = -1 + e^x / 2 on x > 0.
    const auto e = mc::derive_sde(model::builtin_model("exp-generic", {{"a", 1.0}}));
    double z = 1.2, bz;
    e.drift(&z, &bz);
    CHECK(bz == doctest::Approx(-1.0 + std::exp(1.2) / 2));
  }

  TEST_CASE("non-smooth coefficients are refused") {
    CHECK(error_code([] { mc::derive_sde(from_file("generic_min.json")); }) == "montecarlo.NotSmoothEnough");
  }

  TEST_CASE("Wilson interval") {
    const auto p = mc::wilson(0.0, 50, 100, 3.0);
    const double z2 = 9.0, n = 100.0;
    const double half = 3.0 * std::sqrt(0.25 / n + z2 / (4 * n * n)) / (1 + z2 / n);
    CHECK(p.p_hat == doctest::Approx(0.5));
    CHECK(p.ci_low == doctest::Approx(0.5 - half));
    CHECK(p.ci_high == doctest::Approx(0.5 + half));
    const auto zero = mc::wilson(0.0, 0, 100, 3.0);
    CHECK(zero.ci_low == 0.0);
    CHECK(zero.ci_high == doctest::Approx(z2 / n / (1 + z2 / n)));
  }

  TEST_CASE("Brownian variance at T = 1") {
    const auto sde = mc::constant_sde(1, {0.0}, std::sqrt(2.0));
    mc::SimOptions o;
    o.T = 1.0;
    o.dt = 0.01;
    o.n_paths = 10000;
    const auto e = mc::simulate(sde, {0.0}, o);
    double m1 = 0, m2 = 0;
    for (const auto& p : e.paths) {
      m1 += p.final[0];
      m2 += p.final[0] * p.final[0];
    }
    m1 /= o.n_paths;
    const double var = m2 / o.n_paths - m1 * m1;
    // Var X_1 = 2; the sample variance has standard deviation 2 sqrt(2/n).
    CHECK(std::fabs(var - 2.0) < 3 * 2.0 * std::sqrt(2.0 / o.n_paths));
    CHECK(std::fabs(m1) < 3 * std::sqrt(2.0 / o.n_paths));
  }

  TEST_CASE("determinism and thread independence") {
    const auto sde = mc::derive_sde(model::builtin_model("bm-1"));
    mc::SimOptions o;
    o.T = 5.0;
    o.dt = 1e-2;
    o.n_paths = 300;
    o.seed = 42;
    o.target = mc::Target{{0.0}, 0.5};
    const auto a = mc::simulate(sde, {1.0}, o);
    const auto b = mc::simulate(sde, {1.0}, o);
    o.threads = 3;
    const auto c = mc::simulate(sde, {1.0}, o);
    for (std::size_t i = 0; i < a.paths.size(); ++i) {
      CHECK(a.paths[i].first_hit == b.paths[i].first_hit);
      CHECK(a.paths[i].last_visit == c.paths[i].last_visit);
      CHECK(a.paths[i].final == c.paths[i].final);
    }
  }

  TEST_CASE("hit counts grow with the horizon") {
    const auto sde = mc::derive_sde(model::builtin_model("bm-1"));
    mc::SimOptions o;
    o.dt = 1e-2;
    o.n_paths = 500;
    o.target = mc::Target{{0.0}, 0.5};
    o.T = 2.0;
    const auto s = mc::recurrence_statistics(mc::simulate(sde, {3.0}, o), {2.0});
    o.T = 8.0;
    const auto l = mc::recurrence_statistics(mc::simulate(sde, {3.0}, o), {2.0, 8.0});
    CHECK(s.hit[0].hits == l.hit[0].hits);
    CHECK(l.hit[1].hits >= l.hit[0].hits);
  }

  TEST_CASE("explosions are recorded") {
    const auto sde = mc::derive_sde(model::builtin_model("exp-generic"));
    mc::SimOptions o;
    o.T = 3.0;
    o.n_paths = 200;
    const auto e = mc::simulate(sde, {2.0}, o);
    const auto l = mc::lifetime_statistics(e, {0.01, 3.0});
    CHECK(l.exploded[0].hits == 0);
    CHECK(l.exploded[1].hits == 200);
    CHECK(l.hint == "explosions-observed");
  }

  TEST_CASE("too few paths") {
    const auto sde = mc::constant_sde(1, {0.0}, 1.0);
    mc::SimOptions o;
    o.n_paths = 50;
    o.target = mc::Target{{0.0}, 1.0};
    const auto e = mc::simulate(sde, {0.0}, o);
    CHECK(error_code([&] { mc::recurrence_statistics(e, {0.5}); }) == "montecarlo.InsufficientPaths");
  }
}
