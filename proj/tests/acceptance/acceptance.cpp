// Acceptance checks 1-8. Prints one PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rtd/cli.hpp"
#include "rtd/criteria.hpp"
#include "rtd/discrete_lab.hpp"
#include "rtd/model.hpp"
#include "rtd/montecarlo.hpp"
#include "rtd/scale_1d.hpp"
#include "rtd/volume_growth.hpp"
#include "support/random_generators.hpp"

namespace fs = std::filesystem;
using namespace rtd;
using criteria::Verdict;
using lab::Vec;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// 1. I+ for phi = e^{-|x|}, b = 1/2.
void criterion1(Outcome& o) {
  // Oracle: int_0^inf e^x exp(1 - e^x) dx = [-exp(1 - e^x)]_0^inf = 1.
  const double oracle = 1.0;
  const auto t0 = Clock::now();
  const auto r = scale1d::classify_1d(model::builtin_model("exp-generic"));
  const double dt = seconds_since(t0);
  const double ip = r.scale.plus.value;
  o.detail << "I_plus=" << ip << " verdict=" << criteria::to_string(r.classification.verdict) << " time=" << dt << "s";
  o.require(std::fabs(ip - oracle) <= 1e-6, "I_plus within 1e-6 of 1");
  o.require(r.classification.verdict == Verdict::NotRecurrent, "verdict NotRecurrent");
  o.require(dt < 1.0, "runtime < 1 s");
}

// 2. Power weights in d = 2.
void criterion2(Outcome& o) {
  auto run = [&](double eta, bool irreducible) {
    cli::RunConfig c;
    c.command = "classify";
    c.builtin = "power-weight";
    c.params = {{"eta", eta}, {"d", 2.0}};
    c.irreducible = irreducible;
    c.fixed_clock = true;
    const auto t0 = Clock::now();
    const auto r = cli::run(c);
    const double dt = seconds_since(t0);
    const std::string v = r.report["result"].value("verdict", std::string("error"));
    o.detail << "eta=" << eta << ":" << v << "(" << dt << "s) ";
    o.require(dt < 30.0, "runtime < 30 s");
    return r;
  };
  for (double eta : {0.5, 1.0, 1.5}) {
    // Transient exactly when -d + 2 < eta < d.
    const auto r = run(eta, false);
    o.require(r.report["result"].value("verdict", "") == "Transient", "eta=" + std::to_string(eta) + " Transient");
  }
  const auto r0 = run(0.0, true);
  o.require(r0.report["result"].value("verdict", "") == "Recurrent", "eta=0 Recurrent");
  const std::string id = r0.report["result"]["classification"].value("criterion_id", "");
  o.require(id.find("volume_growth") != std::string::npos, "eta=0 decided by the volume criterion");
}

// 3. Cutoff witnesses with vanishing energy, and NotRecurrent from scale_1d.
void criterion3(Outcome& o) {
  for (const char* name : {"exp-generic", "lebesgue-const-drift"}) {
    const auto m = model::builtin_model(name);
    double prev = INFINITY;
    o.detail << name << ": E=";
    for (double n : {10.0, 100.0, 1000.0}) {
      const auto w = criteria::lipschitz_cutoff_energy(m, n);
      o.detail << w.energy << " ";
      o.require(w.max_slope <= 2.0 / n * (1 + 1e-9), std::string(name) + " slope <= 2/n");
      o.require(w.energy < prev, std::string(name) + " energy decreasing");
      o.require(w.energy >= -1e-12, std::string(name) + " energy nonnegative");
      prev = w.energy;
    }
    o.require(prev < 0.05, std::string(name) + " final energy < 0.05");
    const auto c = scale1d::classify_1d(m);
    o.detail << "verdict=" << criteria::to_string(c.classification.verdict) << "; ";
    o.require(c.classification.verdict == Verdict::NotRecurrent, std::string(name) + " NotRecurrent");
  }
}

// 4. Energy bound for bm-2.
void criterion4(Outcome& o) {
  const auto m = model::builtin_model("bm-2");
  const std::vector<double> ns{10.0, 100.0, 1000.0, 10000.0};
  const auto prof = volume::build_profiles_on(m, volume::default_grid(1e4));
  const auto a = volume::compute_a(prof.v, ns);
  auto chi = criteria::build_chi_sequence(prof.v, prof.v2, a, ns);
  double prev_b = INFINITY, last_b = 0;
  for (double n : ns) {
    const auto e = criteria::energy_of_chi(m, chi, n, 1e-2);
    // Oracle: a_n = log(n)/pi, e_n = 2/a_n, b_n = 2/a_n + 1/(a_n^2 pi).
    const double an = std::log(n) / std::numbers::pi;
    o.require(std::fabs(e.e_n - 2.0 / an) <= 1e-6 * (2.0 / an), "e_n matches 2/a_n");
    o.detail << "n=" << n << " e_n=" << e.e_n << " b_n=" << e.b_n << "; ";
    o.require(e.e_n <= e.b_n * 1.01, "e_n <= b_n (1%)");
    o.require(e.b_n < prev_b, "b_n decreasing");
    prev_b = last_b = e.b_n;
  }
  o.require(last_b < 0.02, "b_n < 0.02 at n = 1e4");
}

// 5. Mollification identity for v1 = pi r^2 at n = 4.
void criterion5(Outcome& o) {
  std::vector<double> radii, vals;
  for (int k = 0; k <= 400; ++k) {
    const double r = 0.5 + k * (10.0 - 0.5) / 400;
    radii.push_back(r);
    vals.push_back(std::numbers::pi * r * r);
  }
  const volume::GrowthProfile v1(volume::Kind::V1, radii, vals);
  const auto res = volume::mollify_check(v1, 4.0, {1e-2, 1e-3, 1e-4});
  // Oracle: 2 log(4)/pi + 1/pi - 16/(16 pi).
  const double rhs = 2 * std::log(4.0) / std::numbers::pi;
  o.detail << "rhs=" << res.rhs << " residual(1e-2,1e-3,1e-4)=" << res.residual[0] << "," << res.residual[1] << ","
           << res.residual[2];
  o.require(std::fabs(res.rhs - rhs) < 1e-9, "right-hand side matches the closed form");
  o.require(res.residual[1] <= 1e-3, "agreement to 1e-3 at eps = 1e-3");
  o.require(res.residual[0] >= 10 * res.residual[2], "residual drops 10x from 1e-2 to 1e-4");
}

// 6. Randomised discrete invariants.
void criterion6(Outcome& o) {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<int> size(3, 200);
  double worst_resolvent = 0, worst_submarkov = 0, worst_drift = 0, worst_eq = 0, worst_con = 0, worst_exh = 0;
  int instances = 0, transient = 0, recurrent = 0, good_ok = 0, rec3_ok = 0;
  for (int k = 0; k < 60; ++k) {
    const int n = k < 2 ? (k == 0 ? 3 : 200) : size(rng);
    const bool absorbing = k % 2 == 0;
    const auto G = lab::assemble(testing::random_parts(rng, n, absorbing),
                                 absorbing ? lab::Boundary::Absorbing : lab::Boundary::Reflecting);
    ++instances;
    const Vec f = testing::random_vector(rng, n);
    const double a = 0.4, b = 3.0;
    const Vec ga = lab::resolvent(G, a, f), gb = lab::resolvent(G, b, f);
    worst_resolvent = std::max(worst_resolvent, (ga - gb - (b - a) * lab::resolvent(G, a, gb)).lpNorm<Eigen::Infinity>() /
                                                    std::max(1.0, ga.lpNorm<Eigen::Infinity>()));
    const Vec one = Vec::Ones(n), pos = testing::random_vector(rng, n, 0.0, 1.0);
    for (const Vec& p : {Vec(a * lab::resolvent(G, a, one)), Vec(a * lab::resolvent_adjoint(G, a, one))})
      worst_submarkov = std::max({worst_submarkov, p.maxCoeff() - 1.0, -p.minCoeff()});
    for (const Vec& p : {lab::resolvent(G, a, pos), lab::resolvent_adjoint(G, a, pos)})
      worst_submarkov = std::max(worst_submarkov, -p.minCoeff());
    const Vec u = testing::random_vector(rng, n);
    worst_drift = std::max(worst_drift, std::fabs(lab::inner(G, G.N * u, u)) / lab::inner(G, u, u));
    Vec h = Vec::Zero(n);
    for (int i = 0; i < n; i += 3) h[i] = 0.5;
    // The unkilled Green operator exists at alpha = 0 only for absorbing chains.
    const double alpha0 = absorbing ? 0.0 : 0.01;
    worst_con = std::max({worst_con, lab::killed_resolvent(G, h, alpha0, pos).residual,
                          lab::killed_resolvent(G, h, 0.7, pos).residual,
                          lab::time_changed_resolvent(G, h, 0.05, 0.7, pos).residual});
    std::vector<std::vector<int>> nested;
    for (int m : {std::max(1, n / 3), std::max(1, 2 * n / 3), n}) {
      std::vector<int> s(static_cast<std::size_t>(m));
      for (int i = 0; i < m; ++i) s[static_cast<std::size_t>(i)] = i;
      nested.push_back(s);
    }
    worst_exh = std::max(worst_exh, lab::exhaustion(G, nested, a, pos + Vec::Constant(n, 0.1)).max_violation);
    if (absorbing) {
      ++transient;
      worst_eq = std::max(worst_eq, lab::verify_notran1(G, one, u));
      const auto g = lab::find_good_g(G, Vec::Ones(n));
      good_ok += g.positive && g.within_bound && g.g.minCoeff() > 0;
    } else {
      ++recurrent;
      const Vec hh = testing::random_vector(rng, n, 0.1, 1.0);
      rec3_ok += lab::rec3_chi(G, hh, {1.0, 10.0, 100.0, 1000.0}).passed();
    }
  }
  // Finite-volume truncations of a model domain.
  for (const char* name : {"bm-1", "lebesgue-const-drift"}) {
    const auto grid = lab::uniform_grid(1, 400, 5.0);
    const auto e = lab::domain_exhaustion(model::builtin_model(name), grid, {1.0, 2.0, 3.5, 5.0}, 0.5,
                                          [](const model::Point& x) { return std::exp(-x[0] * x[0]); });
    worst_exh = std::max(worst_exh, e.max_violation);
  }
  const double dt = seconds_since(t0);
  o.detail << instances << " generators (" << transient << " absorbing, " << recurrent << " reflecting): resolvent="
           << worst_resolvent << " submarkov=" << worst_submarkov << " drift=" << worst_drift << " eq=" << worst_eq
           << " con=" << worst_con << " good_g=" << good_ok << "/" << transient << " rec3=" << rec3_ok << "/" << recurrent
           << " exhaustion=" << worst_exh << " time=" << dt << "s";
  o.require(instances >= 50, ">= 50 generators");
  o.require(worst_resolvent < 1e-10, "resolvent identity < 1e-10");
  o.require(worst_submarkov <= 1e-12, "sub-Markov bounds");
  o.require(worst_drift < 1e-12, "drift energy < 1e-12");
  o.require(worst_eq < 1e-8, "transient identity < 1e-8");
  o.require(worst_con < 1e-10, "killed/time-changed identities < 1e-10");
  o.require(good_ok == transient, "good g on every transient instance");
  o.require(rec3_ok == recurrent, "rec3 checks on every recurrent instance");
  o.require(worst_exh <= 1e-12, "exhaustion monotone to 1e-12");
  o.require(dt < 60.0, "suite < 60 s");
}

// 7. Monte Carlo against closed forms.
void criterion7(Outcome& o) {
  {
    const auto t0 = Clock::now();
    mc::SimOptions s;
    s.T = 1e3;
    s.n_paths = 10000;
    s.adaptive = true;
    s.target = mc::Target{{0.0}, 1.0};
    const auto e = mc::simulate(mc::derive_sde(model::builtin_model("bm-1")), {0.0}, s);
    const auto r = mc::recurrence_statistics(e, {0.0, 0.1, 0.2, 0.4});
    const double dt = seconds_since(t0);
    o.detail << "bm-1 revisit:";
    for (const auto& p : r.revisit) {
      o.detail << " " << p.p_hat;
      o.require(p.p_hat >= 0.99, "1-d revisit fraction >= 0.99");
    }
    o.detail << " (" << dt << "s); ";
    o.require(dt < 120.0, "1-d run < 2 min");
  }
  {
    const auto t0 = Clock::now();
    mc::SimOptions s;
    s.T = 1e4;
    s.n_paths = 10000;
    s.adaptive = true;
    s.target = mc::Target{{0.0, 0.0, 0.0}, 1.0};
    const auto e = mc::simulate(mc::derive_sde(model::builtin_model("bm-3")), {2.0, 0.0, 0.0}, s);
    const auto r = mc::recurrence_statistics(e, {s.T});
    const double dt = seconds_since(t0);
    // Oracle: P(hit B_1 from |x| = 2) = 1/2.
    const double p = r.hit[0].p_hat, sd = std::sqrt(0.25 / s.n_paths);
    o.detail << "bm-3 hit=" << p << " (target 0.5 +- " << 3 * sd << ", " << dt << "s); ";
    o.require(std::fabs(p - 0.5) <= 3 * sd, "3-d hit probability 0.5 +- 3 sigma");
    o.require(dt < 120.0, "3-d run < 2 min");
  }
  {
    const auto t0 = Clock::now();
    mc::SimOptions s;
    s.T = 200.0;
    s.n_paths = 10000;
    s.adaptive = true;
    s.target = mc::Target{{0.5}, 0.5};
    // L = f'' + f': scale density e^{-x}, so P_5(hit [0,1]) = e^{-5} / e^{-1}.
    const double oracle = std::exp(-4.0);
    const auto e = mc::simulate(mc::constant_sde(1, {1.0}, std::sqrt(2.0)), {5.0}, s);
    const auto r = mc::recurrence_statistics(e, {s.T});
    const double dt = seconds_since(t0);
    const double p = r.hit[0].p_hat, sd = std::sqrt(oracle * (1 - oracle) / s.n_paths);
    o.detail << "drift hit=" << p << " (target " << oracle << " +- " << 3 * sd << ", " << dt << "s)";
    o.require(std::fabs(p - oracle) <= 3 * sd, "drifted hit probability e^-4 +- 3 sigma");
    o.require(dt < 120.0, "drift run < 2 min");
  }
}

// 8. Byte-identical reports and reproducible ensembles.
void criterion8(Outcome& o) {
  const fs::path base = fs::temp_directory_path() / "rtd_acceptance_determinism";
  fs::remove_all(base);
  auto twice = [&](cli::RunConfig c, const std::string& tag) {
    c.fixed_clock = true;
    c.out_dir = (base / (tag + "_1")).string();
    cli::run(c);
    c.out_dir = (base / (tag + "_2")).string();
    cli::run(c);
    const std::string a = slurp(base / (tag + "_1") / "report.json"), b = slurp(base / (tag + "_2") / "report.json");
    o.detail << tag << ":" << (a == b && !a.empty() ? "identical" : "DIFFERENT") << " ";
    o.require(a == b && !a.empty(), tag + " reports byte-identical");
  };
  cli::RunConfig c;
  c.command = "classify";
  c.builtin = "bm-2";
  twice(c, "classify");
  c.command = "lab";
  c.builtin = "exp-generic";
  c.grid = 2000;
  twice(c, "lab");
  c = {};
  c.command = "simulate";
  c.builtin = "bm-1";
  c.paths = 1000;
  c.horizon = 10.0;
  twice(c, "simulate");

  mc::SimOptions s;
  s.T = 10.0;
  s.n_paths = 1000;
  s.seed = 99;
  s.target = mc::Target{{0.0}, 1.0};
  const auto sde = mc::derive_sde(model::builtin_model("bm-1"));
  const auto e1 = mc::simulate(sde, {0.5}, s), e2 = mc::simulate(sde, {0.5}, s);
  bool same = true;
  for (std::size_t i = 0; i < e1.paths.size(); ++i) {
    const auto &p = e1.paths[i], &q = e2.paths[i];
    same = same && p.first_hit == q.first_hit && p.last_visit == q.last_visit && p.exploded == q.exploded &&
           p.final == q.final && p.steps == q.steps;
  }
  o.detail << "ensemble flags:" << (same ? "identical" : "DIFFERENT");
  o.require(same, "fixed-seed ensembles identical");
  fs::remove_all(base);
}

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) only = std::atoi(argv[++i]);
  const std::vector<std::function<void(Outcome&)>> all{criterion1, criterion2, criterion3, criterion4,
                                                       criterion5, criterion6, criterion7, criterion8};
  bool ok = true;
  for (int k = 1; k <= 8; ++k) {
    if (only && k != only) continue;
    Outcome o;
    try {
      all[static_cast<std::size_t>(k - 1)](o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    std::printf("criterion %d: %s  %s\n", k, o.pass ? "PASS" : "FAIL", o.detail.str().c_str());
    std::fflush(stdout);
    ok = ok && o.pass;
  }
  return ok ? 0 : 1;
}
