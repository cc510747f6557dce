#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rtd/criteria.hpp"
#include "rtd/model.hpp"
#include "rtd/volume_growth.hpp"
#include "support/error_code.hpp"

namespace model = rtd::model;
namespace volume = rtd::volume;
namespace criteria = rtd::criteria;
using criteria::Verdict;
using rtd::testing::error_code;
using std::numbers::pi;

namespace {
volume::Profiles profiles(const model::Model& m, double r_max = 1e4) {
  return volume::build_profiles_on(m, volume::default_grid(r_max));
}
}  // namespace

TEST_SUITE("criteria") {
  TEST_CASE("planar Brownian motion is recurrent") {
    const auto m = model::builtin_model("bm-2");
    const auto p = profiles(m);
    const auto a = volume::compute_a(p.v, volume::default_n_list(1e4));
    CHECK(criteria::test_recurrence_volume(p.v, p.v2, a, true).verdict == Verdict::Recurrent);
    CHECK(criteria::test_recurrence_volume(p.v, p.v2, a, false).verdict == Verdict::NotTransient);
  }

  TEST_CASE("cubic growth is not recurrent by volume") {
    const auto m = model::builtin_model("bm-3");
    const auto p = profiles(m);
    const auto a = volume::compute_a(p.v, volume::default_n_list(1e4));
    CHECK(criteria::test_recurrence_volume(p.v, p.v2, a, true).verdict == Verdict::Inconclusive);
    CHECK(criteria::test_growth_bounds(p.v1, p.v2, p.v).verdict == Verdict::Inconclusive);
  }

  TEST_CASE("symmetric transience from the tail law") {
    for (double eta : {0.5, 1.0, 1.5}) {
      const auto m = model::builtin_model("power-weight", {{"eta", eta}});
      const auto p = profiles(m);
      criteria::TailDeclaration d;
      d.law = m.spec().tail_law;
      d.heat_kernel_bounds = true;
      CHECK(criteria::test_transience_symmetric(p.v1, d).verdict == Verdict::Transient);
      d.heat_kernel_bounds = false;
      CHECK(criteria::test_transience_symmetric(p.v1, d).verdict == Verdict::Inconclusive);
    }
    const auto m = model::builtin_model("power-weight", {{"eta", 1.0}});
    const auto p = profiles(m);
    criteria::TailDeclaration wrong;
    wrong.law = model::TailLaw{1.0, 3.0};  // the true constant is 2 pi / 3
    CHECK(error_code([&] { criteria::test_transience_symmetric(p.v1, wrong); }) == "criteria.TailMismatch");
  }

  TEST_CASE("short profiles are rejected") {
    const auto m = model::builtin_model("bm-2");
    const auto p = volume::build_profiles_on(m, {0.5, 1.0, 2.0, 4.0});
    const auto a = volume::compute_a(p.v, {1.0, 2.0, 4.0});
    CHECK(error_code([&] { criteria::test_recurrence_volume(p.v, p.v2, a, true); }) == "criteria.InsufficientTail");
  }

  TEST_CASE("chi energies for planar Brownian motion") {
    // psi_n' = -(1/a_n) / (pi r) so e_n = (1/a_n^2) int_1^n 2 / (pi r) dr = 2 / a_n.
    const auto m = model::builtin_model("bm-2");
    const auto p = profiles(m);
    const std::vector<double> ns{10.0, 100.0, 1000.0};
    const auto a = volume::compute_a(p.v, ns);
    auto chi = criteria::build_chi_sequence(p.v, p.v2, a, ns);
    for (double n : ns) {
      const double an = std::log(n) / pi;
      const auto e = criteria::energy_of_chi(m, chi, n);
      CHECK(e.e_n == doctest::Approx(2.0 / an).epsilon(1e-6));
      CHECK(e.b_n == doctest::Approx(2.0 / an + 1.0 / (an * an * pi)).epsilon(1e-6));
      CHECK(e.within_bound);
    }
    CHECK(chi.psi(10.0, 0.5) == doctest::Approx(1.0));
    CHECK(chi.psi(10.0, 10.0) == doctest::Approx(0.0).epsilon(1e-12));
  }

  TEST_CASE("smooth step") {
    CHECK(criteria::smooth_step(0.0) == 0.0);
    CHECK(criteria::smooth_step(1.0) == 1.0);
    CHECK(criteria::smooth_step(0.5) == doctest::Approx(0.5));
    double max_slope = 0, energy = 0;
    const int N = 200000;
    for (int k = 0; k < N; ++k) {
      const double t = (k + 0.5) / N;
      const double s = (criteria::smooth_step(t + 0.5 / N) - criteria::smooth_step(t - 0.5 / N)) * N;
      max_slope = std::max(max_slope, s);
      energy += s * s / N;
      CHECK(criteria::smooth_step_slope(t) == doctest::Approx(s).epsilon(1e-4));
    }
    CHECK(max_slope == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(energy == doctest::Approx(1.6383).epsilon(1e-4));
  }

  TEST_CASE("cutoff witness for a constant drift on the line") {
    // phi = 1, a = 1/2: E0(chi_n) = 2 * (1/2) int S'(t)^2 dt / n; the drift part cancels between the half-lines.
    const auto m = model::builtin_model("lebesgue-const-drift");
    double sq = 0;
    const int N = 100000;
    for (int k = 0; k < N; ++k) sq += std::pow(criteria::smooth_step_slope((k + 0.5) / N), 2) / N;
    for (double n : {10.0, 100.0}) {
      const auto w = criteria::lipschitz_cutoff_energy(m, n);
      CHECK(w.max_slope <= 2.0 / n * (1 + 1e-9));
      CHECK(w.symmetric == doctest::Approx(sq / n).epsilon(1e-6));
      CHECK(std::fabs(w.drift) < 1e-9);
    }
  }

  TEST_CASE("merge") {
    criteria::Classification t{Verdict::Transient, "x", {}, {}}, nt{Verdict::NotTransient, "y", {}, {}},
        r{Verdict::Recurrent, "z", {}, {}}, nr{Verdict::NotRecurrent, "w", {}, {}}, in{Verdict::Inconclusive, "q", {}, {}};
    CHECK(error_code([&] { criteria::merge({t, nt}); }) == "criteria.InconsistentVerdicts");
    CHECK(error_code([&] { criteria::merge({nr, r}); }) == "criteria.InconsistentVerdicts");
    CHECK(criteria::merge({in, nt}).verdict == Verdict::NotTransient);
    CHECK(criteria::merge({nt, r}).verdict == Verdict::Recurrent);
    CHECK(criteria::merge({in, t, nr}).verdict == Verdict::Transient);
    CHECK(criteria::merge({in}).verdict == Verdict::Inconclusive);
  }
}
