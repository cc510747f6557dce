#include <doctest.h>

#include <cmath>
#include <random>

#include "rtd/discrete_lab.hpp"
#include "rtd/model.hpp"
#include "support/error_code.hpp"
#include "support/random_generators.hpp"

namespace lab = rtd::lab;
namespace model = rtd::model;
using lab::Vec;
using rtd::testing::error_code;

namespace {
// Unit-rate chain on {0, 1, 2} killed at both ends.
lab::GeneratorMatrix three_cell_chain() {
  lab::GeneratorParts p;
  p.mu = Vec::Ones(3);
  p.conductance = {{0, 1, 1.0}, {1, 2, 1.0}};
  p.killing = Vec::Zero(3);
  p.killing[0] = p.killing[2] = 1.0;
  p.ghost_flux = Vec::Zero(3);
  return lab::assemble(p, lab::Boundary::Absorbing);
}
}  // namespace

TEST_SUITE("discrete_lab") {
  TEST_CASE("potential of the killed three-cell chain") {
    const auto G = three_cell_chain();
    // -L u = 1: 2u0 - u1 = 1, 2u1 - u0 - u2 = 1, symmetric => u = (3/2, 2, 3/2).
    const auto P = lab::potential_dichotomy(G, Vec::Ones(3));
    REQUIRE(P.finite);
    CHECK(P.value[0] == doctest::Approx(1.5));
    CHECK(P.value[1] == doctest::Approx(2.0));
    CHECK(P.value[2] == doctest::Approx(1.5));
  }

  TEST_CASE("conservative ring has a divergent potential") {
    std::mt19937_64 rng(7);
    const auto G = lab::assemble(rtd::testing::random_parts(rng, 12, false), lab::Boundary::Reflecting);
    const auto P = lab::potential_dichotomy(G, Vec::Ones(12));
    CHECK_FALSE(P.finite);
    CHECK(P.divergent_states.size() == 12);
    CHECK(error_code([&] { lab::find_good_g(G, Vec::Ones(12)); }) == "lab.NotTransient");
  }

  TEST_CASE("structure of random generators") {
    std::mt19937_64 rng(11);
    for (int n : {3, 17, 60}) {
      for (bool absorbing : {false, true}) {
        const auto G = lab::assemble(rtd::testing::random_parts(rng, n, absorbing),
                                     absorbing ? lab::Boundary::Absorbing : lab::Boundary::Reflecting);
        const auto s = lab::check_structure(G);
        CHECK(s.mu_symmetry < 1e-13);
        CHECK(s.drift_antisymmetry < 1e-13);
        CHECK(s.min_offdiag >= 0.0);
        CHECK(s.max_row_sum < 1e-12);
        const Vec u = rtd::testing::random_vector(rng, n);
        CHECK(std::fabs(lab::inner(G, G.N * u, u)) < 1e-12 * lab::inner(G, u, u));
        // Adjoint is the mu-transpose.
        const Vec v = rtd::testing::random_vector(rng, n);
        CHECK(lab::inner(G, G.L * u, v) == doctest::Approx(lab::inner(G, u, G.adjoint() * v)));
      }
    }
  }

  TEST_CASE("resolvent identity and sub-Markov bounds") {
    std::mt19937_64 rng(3);
    const auto G = lab::assemble(rtd::testing::random_parts(rng, 40, true), lab::Boundary::Absorbing);
    const Vec f = rtd::testing::random_vector(rng, 40);
    const double a = 0.3, b = 2.0;
    const Vec ga = lab::resolvent(G, a, f), gb = lab::resolvent(G, b, f);
    const Vec gab = lab::resolvent(G, a, gb);
    CHECK((ga - gb - (b - a) * gab).lpNorm<Eigen::Infinity>() < 1e-10 * ga.lpNorm<Eigen::Infinity>());
    const Vec one = Vec::Ones(40);
    const Vec p = a * lab::resolvent(G, a, one), q = a * lab::resolvent_adjoint(G, a, one);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.maxCoeff() <= 1.0 + 1e-12);
    CHECK(q.minCoeff() >= 0.0);
    CHECK(q.maxCoeff() <= 1.0 + 1e-12);
  }

  TEST_CASE("energy domination and transient identities") {
    std::mt19937_64 rng(5);
    const auto G = lab::assemble(rtd::testing::random_parts(rng, 30, true), lab::Boundary::Absorbing);
    const auto t = lab::verify_tit(G, {0.1, 1.0}, 3, 9);
    CHECK(t.dominated);
    CHECK(t.max_drift_energy < 1e-12);
    const Vec g = Vec::Ones(30), u = rtd::testing::random_vector(rng, 30);
    CHECK(lab::verify_notran1(G, g, u) < 1e-8);
    const auto gg = lab::find_good_g(G, Vec::Ones(30));
    CHECK(gg.positive);
    CHECK(gg.within_bound);
    CHECK(gg.g.minCoeff() > 0.0);
  }

  TEST_CASE("killed and time-changed resolvents") {
    std::mt19937_64 rng(8);
    const auto G = lab::assemble(rtd::testing::random_parts(rng, 25, true), lab::Boundary::Absorbing);
    Vec h = Vec::Zero(25);
    h.head(5).setConstant(0.7);
    const Vec f = rtd::testing::random_vector(rng, 25, 0.0, 1.0);
    CHECK(lab::killed_resolvent(G, h, 0.0, f).residual < 1e-10);
    CHECK(lab::time_changed_resolvent(G, h, 0.1, 0.5, f).residual < 1e-10);
  }

  TEST_CASE("recurrent chain cutoffs") {
    std::mt19937_64 rng(13);
    const auto G = lab::assemble(rtd::testing::random_parts(rng, 20, false), lab::Boundary::Reflecting);
    const Vec h = rtd::testing::random_vector(rng, 20, 0.1, 1.0);
    const auto r = lab::rec3_chi(G, h, {1.0, 10.0, 100.0, 1000.0});
    CHECK(r.passed());
    const auto K = lab::assemble(rtd::testing::random_parts(rng, 20, true), lab::Boundary::Absorbing);
    CHECK(error_code([&] { lab::rec3_chi(K, h, {1.0, 10.0}); }) == "lab.NotConservative");
  }

  TEST_CASE("weakly invariant sets of a one-way chain") {
    // 0 -> 1 only; both states keep their mass.
    lab::GeneratorMatrix G;
    G.mu = Vec::Ones(2);
    G.L.resize(2, 2);
    G.L.insert(0, 0) = -1.0;
    G.L.insert(0, 1) = 1.0;
    G.L0 = G.L;
    G.N.resize(2, 2);
    const auto w = lab::weakly_invariant_sets(G);
    CHECK(w.classes == 2);
    CHECK_FALSE(w.irreducible);
  }

  TEST_CASE("exhaustion is monotone") {
    std::mt19937_64 rng(21);
    const auto G = lab::assemble(rtd::testing::random_parts(rng, 30, true), lab::Boundary::Absorbing);
    std::vector<std::vector<int>> nested;
    for (int k : {10, 20, 30}) {
      std::vector<int> s;
      for (int i = 0; i < k; ++i) s.push_back(i);
      nested.push_back(s);
    }
    const auto e = lab::exhaustion(G, nested, 0.5, Vec::Ones(30));
    CHECK(e.max_violation <= 1e-12);
    CHECK((e.limit - lab::resolvent(G, 0.5, Vec::Ones(30))).lpNorm<Eigen::Infinity>() < 1e-12);
  }

  TEST_CASE("finite-volume generator of a model") {
    const auto m = model::builtin_model("lebesgue-const-drift");
    const auto grid = lab::uniform_grid(1, 100, 5.0);
    const auto G = lab::build_generator(m, grid, lab::Boundary::Absorbing);
    const auto s = lab::check_structure(G);
    CHECK(s.min_offdiag >= 0.0);
    CHECK(s.max_row_sum < 1e-12);
    CHECK(G.mu.sum() == doctest::Approx(10.0));
    // Too coarse for the drift: the flux exceeds the conductance.
    const auto coarse = lab::uniform_grid(1, 2, 5.0);
    CHECK(error_code([&] { lab::build_generator(model::builtin_model("lebesgue-const-drift", {{"b", 5.0}}), coarse,
                                                lab::Boundary::Absorbing); }) == "lab.EllipticityLoss");
  }

  TEST_CASE("lab report on a small grid") {
    lab::LabOptions o;
    o.cells = 200;
    const auto r = lab::run_lab(model::builtin_model("bm-1"), o);
    CHECK(r.max_residual() < 1e-8);
  }
}
