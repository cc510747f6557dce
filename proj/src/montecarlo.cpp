#include "rtd/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <thread>

#include "rtd/errors.hpp"

namespace rtd::mc {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& kind, const std::string& msg) { throw Error("montecarlo", kind, msg); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool cholesky(int d, const double* a2, double* L) {
  for (int i = 0; i < d * d; ++i) L[i] = 0.0;
  for (int j = 0; j < d; ++j) {
    double s = a2[j * d + j];
    for (int k = 0; k < j; ++k) s -= L[j * d + k] * L[j * d + k];
    if (s < -1e-12 * std::max(1.0, std::fabs(a2[j * d + j])) || !std::isfinite(s)) return false;
    L[j * d + j] = std::sqrt(std::max(s, 0.0));
    for (int i = j + 1; i < d; ++i) {
      double t = a2[i * d + j];
      for (int k = 0; k < j; ++k) t -= L[i * d + k] * L[j * d + k];
      L[i * d + j] = L[j * d + j] > 0 ? t / L[j * d + j] : 0.0;
    }
  }
  return true;
}

double max_eigen_sym(int d, const double* a) {
  // Gershgorin bound is enough for step control.
  double m = 0.0;
  for (int i = 0; i < d; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += std::fabs(a[i * d + j]);
    m = std::max(m, s);
  }
  return m;
}

struct Geometry {
  int d;
  const Target* target;
  double dist(const double* x) const {  // signed distance to the sphere, negative inside
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      const double u = x[i] - target->center[static_cast<std::size_t>(i)];
      s += u * u;
    }
    return std::sqrt(s) - target->radius;
  }
  void normal(const double* x, double* n) const {
    double s = 0.0;
    for (int i = 0; i < d; ++i) {
      n[i] = x[i] - target->center[static_cast<std::size_t>(i)];
      s += n[i] * n[i];
    }
    s = std::sqrt(s);
    for (int i = 0; i < d; ++i) n[i] = s > 0 ? n[i] / s : (i == 0 ? 1.0 : 0.0);
  }
};

PathRecord run_path(const SDECoefficients& sde, const std::vector<double>& x0, const SimOptions& opt,
                    std::uint64_t index, std::vector<std::vector<double>>* dump) {
  const int d = sde.dim;
  std::mt19937_64 rng(path_seed(opt.seed, index));
  std::normal_distribution<double> Z(0.0, 1.0);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  PathRecord rec;
  double x[model::kMaxDim] = {0, 0, 0}, xn[model::kMaxDim] = {0, 0, 0};
  double b[model::kMaxDim], a[9], a2[9], S[9], nrm[model::kMaxDim];
  for (int i = 0; i < d; ++i) x[i] = x0[static_cast<std::size_t>(i)];
  const Geometry geo{d, opt.target ? &*opt.target : nullptr};
  double cb[model::kMaxDim], cS[9];
  if (sde.constant) {
    sde.drift(x, cb);
    sigma_factor(sde, x, cS);
  }
  double t = 0.0;
  auto record_visit = [&](double when) {
    if (!std::isfinite(rec.first_hit)) rec.first_hit = when;
    rec.last_visit = when;
  };
  auto push = [&]() {
    if (!dump) return;
    std::vector<double> row{t};
    for (int i = 0; i < d; ++i) row.push_back(x[i]);
    dump->push_back(std::move(row));
  };
  double dcur = geo.target ? geo.dist(x) : INFINITY;
  if (geo.target && dcur <= 0) record_visit(0.0);
  push();
  while (t < opt.T) {
    double h = std::min(opt.dt, opt.T - t);
    if (opt.adaptive && sde.constant && geo.target) {
      const double far = sde.noise_max > 0 ? opt.kappa * opt.kappa * dcur * dcur / sde.noise_max : INFINITY;
      h = std::min(std::max(opt.dt, far), opt.T - t);
    }
    const double* bp = cb;
    const double* Sp = cS;
    if (!sde.constant) {
      sde.drift(x, b);
      bool ok = sigma_factor(sde, x, S);
      for (int i = 0; i < d; ++i) ok = ok && std::isfinite(b[i]);
      if (!ok) {
        rec.exploded = true;
        rec.explosion_time = t;
        break;
      }
      // Capped displacement for singular drifts.
      double bmax = 0.0, bn = 0.0, xn2 = 0.0;
      for (int i = 0; i < d; ++i) bmax = std::max(bmax, std::fabs(b[i]));
      for (int i = 0; i < d; ++i) {
        if (bmax > 0) bn += (b[i] / bmax) * (b[i] / bmax);
        xn2 += x[i] * x[i];
      }
      const double cap = 1.0 + std::sqrt(xn2);
      const double disp = bmax * std::sqrt(bn) * h;
      if (disp > cap)
        for (int i = 0; i < d; ++i) b[i] *= cap / disp;
      bp = b;
      Sp = S;
    }
    double z[model::kMaxDim];
    for (int i = 0; i < d; ++i) z[i] = Z(rng);
    const double sq = std::sqrt(h);
    double r2 = 0.0;
    for (int i = 0; i < d; ++i) {
      double w = 0.0;
      for (int k = 0; k <= i; ++k) w += Sp[i * d + k] * z[k];
      xn[i] = x[i] + bp[i] * h + sq * w;
      r2 += xn[i] * xn[i];
    }
    ++rec.steps;
    const double tn = t + h;
    bool finite = std::isfinite(r2);
    if (!finite || std::sqrt(r2) > opt.blowup_radius || !sde.valid(xn)) {
      rec.exploded = true;
      rec.explosion_time = tn;
      for (int i = 0; i < d; ++i) x[i] = xn[i];
      t = tn;
      break;
    }
    if (geo.target) {
      const double dn = geo.dist(xn);
      if (dn <= 0) {
        record_visit(tn);
      } else if (dcur > 0) {
        // Brownian-bridge crossing of the tangent plane.
        geo.normal(x, nrm);
        sde.diffusion(x, a);
        for (int i = 0; i < d * d; ++i) a2[i] = 2.0 * a[i];
        double s2 = 0.0;
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j) s2 += nrm[i] * a2[i * d + j] * nrm[j];
        if (s2 > 0) {
          const double p = std::exp(-2.0 * dcur * dn / (s2 * h));
          if (p > 1e-15 && U(rng) < p) record_visit(tn);
        }
      }
      dcur = dn;
    }
    for (int i = 0; i < d; ++i) x[i] = xn[i];
    t = tn;
    push();
  }
  for (int i = 0; i < d; ++i) rec.final[static_cast<std::size_t>(i)] = x[i];
  if (opt.exit_radius > 0) {
    double r2 = 0.0;
    for (int i = 0; i < d; ++i) r2 += x[i] * x[i];
    rec.outside_exit_radius = rec.exploded || std::sqrt(r2) > opt.exit_radius;
  }
  return rec;
}

}  // namespace

std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path) { return splitmix64(splitmix64(seed) ^ splitmix64(path + 0x632be59bd9b4e019ULL)); }

bool sigma_factor(const SDECoefficients& sde, const double* x, double* sigma) {
  const int d = sde.dim;
  double a[9], a2[9];
  sde.diffusion(x, a);
  for (int i = 0; i < d * d; ++i) a2[i] = a[i] + a[(i % d) * d + i / d];  // 2 * symmetric part
  return cholesky(d, a2, sigma);
}

SDECoefficients derive_sde(const model::Model& m) {
  const auto& spec = m.spec();
  if (!spec.smooth_phi || !spec.smooth_A)
    fail("NotSmoothEnough", "the Ito form needs differentiable phi and A (smooth_phi / smooth_A)");
  const int d = m.dim();
  auto M = std::make_shared<model::Model>(m);
  // d_i a_ij expressions.
  auto da = std::make_shared<std::vector<expr::Expression>>();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) da->push_back(m.a_expr(i, j).derivative(i));
  SDECoefficients s;
  s.dim = d;
  s.drift = [M, da, d](const double* x, double* b) {
    const std::span<const double> xs(x, static_cast<std::size_t>(d));
    const double ph = M->phi(xs);
    double gp[model::kMaxDim];
    M->grad_phi(xs, gp);
    for (int j = 0; j < d; ++j) {
      double v = M->b(j, xs);
      for (int i = 0; i < d; ++i) v += (*da)[static_cast<std::size_t>(i * d + j)](xs) + M->a(i, j, xs) * gp[i] / ph;
      b[j] = v;
    }
  };
  s.diffusion = [M, d](const double* x, double* a) { M->a_sym(std::span<const double>(x, static_cast<std::size_t>(d)), a); };
  s.valid = [M, d](const double* x) {
    const std::span<const double> xs(x, static_cast<std::size_t>(d));
    if (!M->domain().contains(xs)) return false;
    for (const auto& p : M->spec().singular_points) {
      double r2 = 0.0;
      for (int i = 0; i < d; ++i) r2 += (x[i] - p[static_cast<std::size_t>(i)]) * (x[i] - p[static_cast<std::size_t>(i)]);
      if (r2 < 1e-6) return false;
    }
    return true;
  };
  bool constant = true;
  for (int i = 0; i < d && constant; ++i) {
    constant = constant && m.b_expr(i).is_constant();
    for (int j = 0; j < d; ++j) constant = constant && m.a_expr(i, j).is_constant();
    constant = constant && m.dphi_expr(i).is_constant() && m.dphi_expr(i).constant_value() == 0.0;
  }
  constant = constant && spec.singular_points.empty() && spec.domain.kind == model::DomainKind::FullSpace;
  s.constant = constant;
  if (constant) {
    double a[9], zero[model::kMaxDim] = {0, 0, 0};
    s.diffusion(zero, a);
    for (double& v : a) v *= 2.0;
    s.noise_max = max_eigen_sym(d, a);
  }
  return s;
}

SDECoefficients constant_sde(int d, const std::vector<double>& b, double sig) {
  if (d < 1 || d > model::kMaxDim || static_cast<int>(b.size()) != d) fail("InvalidArgument", "bad dimension");
  SDECoefficients s;
  s.dim = d;
  s.drift = [b, d](const double*, double* out) {
    for (int i = 0; i < d; ++i) out[i] = b[static_cast<std::size_t>(i)];
  };
  s.diffusion = [sig, d](const double*, double* a) {
    for (int i = 0; i < d * d; ++i) a[i] = 0.0;
    for (int i = 0; i < d; ++i) a[i * d + i] = 0.5 * sig * sig;
  };
  s.valid = [](const double*) { return true; };
  s.constant = true;
  s.noise_max = sig * sig;
  return s;
}

PathEnsemble simulate(const SDECoefficients& sde, const std::vector<double>& x0, const SimOptions& opt) {
  if (!(opt.dt > 0) || !(opt.T >= 0)) fail("InvalidArgument", "need dt > 0 and T >= 0");
  if (static_cast<int>(x0.size()) != sde.dim) fail("InvalidArgument", "x0 has the wrong dimension");
  if (!sde.valid(x0.data())) fail("InvalidArgument", "x0 lies outside the validity region");
  if (opt.target && static_cast<int>(opt.target->center.size()) != sde.dim)
    fail("InvalidArgument", "target centre has the wrong dimension");
  PathEnsemble e;
  e.dim = sde.dim;
  e.x0 = x0;
  e.options = opt;
  e.paths.resize(static_cast<std::size_t>(opt.n_paths));
  e.dumps.resize(static_cast<std::size_t>(std::min(opt.dump_paths, opt.n_paths)));
  const int threads = std::max(1, opt.threads);
  auto work = [&](int tid) {
    for (int p = tid; p < opt.n_paths; p += threads) {
      auto* dump = p < static_cast<int>(e.dumps.size()) ? &e.dumps[static_cast<std::size_t>(p)] : nullptr;
      e.paths[static_cast<std::size_t>(p)] = run_path(sde, x0, opt, static_cast<std::uint64_t>(p), dump);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  return e;
}

LadderPoint wilson(double t, long hits, long n, double z) {
  LadderPoint p;
  p.t = t;
  p.hits = hits;
  p.n = n;
  if (n <= 0) return p;
  const double nn = static_cast<double>(n);
  const double ph = static_cast<double>(hits) / nn;
  const double z2 = z * z;
  const double den = 1 + z2 / nn;
  const double mid = (ph + z2 / (2 * nn)) / den;
  const double half = z * std::sqrt(ph * (1 - ph) / nn + z2 / (4 * nn * nn)) / den;
  p.p_hat = ph;
  p.ci_low = std::max(0.0, mid - half);
  p.ci_high = std::min(1.0, mid + half);
  return p;
}

RecurrenceReport recurrence_statistics(const PathEnsemble& e, const std::vector<double>& ladder) {
  if (e.paths.size() < 100) fail("InsufficientPaths", std::to_string(e.paths.size()) + " paths, need at least 100");
  if (!e.options.target) fail("InvalidArgument", "the ensemble was simulated without a target set");
  RecurrenceReport r;
  const long n = static_cast<long>(e.paths.size());
  for (double t : ladder) {
    if (t > e.options.T) fail("InvalidArgument", "ladder time beyond the horizon");
    long rv = 0, hit = 0;
    for (const auto& p : e.paths) {
      if (p.last_visit >= t) ++rv;
      if (p.first_hit <= t) ++hit;
    }
    r.revisit.push_back(wilson(t, rv, n));
    r.hit.push_back(wilson(t, hit, n));
  }
  if (!r.revisit.empty()) {
    const auto& first = r.revisit.front();
    const auto& last = r.revisit.back();
    const bool near_one = std::all_of(r.revisit.begin(), r.revisit.end(), [](const LadderPoint& p) { return p.ci_high >= 0.99; });
    if (last.ci_high < 0.5 && last.ci_high < first.ci_low)
      r.hint = "transient-consistent";
    else if (near_one)
      r.hint = "recurrent-consistent";
    else
      r.hint = "undetermined";
  }
  r.scope_note = "single start point: tests the everywhere statement, guaranteed in theory only under strong Feller";
  return r;
}

LifetimeReport lifetime_statistics(const PathEnsemble& e, const std::vector<double>& buckets) {
  LifetimeReport r;
  const long n = static_cast<long>(e.paths.size());
  long total = 0;
  for (double t : buckets) {
    long c = 0;
    for (const auto& p : e.paths)
      if (p.exploded && p.explosion_time <= t) ++c;
    r.exploded.push_back(wilson(t, c, n));
  }
  for (const auto& p : e.paths) total += p.exploded;
  r.hint = total == 0 ? "conservative-consistent" : "explosions-observed";
  return r;
}

HalvingReport step_halving_check(const SDECoefficients& sde, const std::vector<double>& x0, const SimOptions& opt,
                                 const std::vector<double>& ladder) {
  SimOptions fine = opt;
  fine.dt = opt.dt / 2;
  const PathEnsemble a = simulate(sde, x0, opt), b = simulate(sde, x0, fine);
  HalvingReport r;
  auto fractions = [&](const PathEnsemble& e) {
    std::vector<LadderPoint> out;
    if (e.options.target) {
      const RecurrenceReport rr = recurrence_statistics(e, ladder);
      out.insert(out.end(), rr.revisit.begin(), rr.revisit.end());
      out.insert(out.end(), rr.hit.begin(), rr.hit.end());
    }
    const LifetimeReport lr = lifetime_statistics(e, ladder);
    out.insert(out.end(), lr.exploded.begin(), lr.exploded.end());
    return out;
  };
  r.coarse = fractions(a);
  r.fine = fractions(b);
  for (std::size_t i = 0; i < r.coarse.size(); ++i) {
    const double p1 = r.coarse[i].p_hat, p2 = r.fine[i].p_hat;
    const double n = static_cast<double>(r.coarse[i].n);
    const double pool = 0.5 * (p1 + p2);
    const double se = std::sqrt(std::max(pool * (1 - pool), 0.25 / n) * 2.0 / n);
    r.max_shift_sigma = std::max(r.max_shift_sigma, std::fabs(p1 - p2) / se);
  }
  r.consistent = r.max_shift_sigma <= 3.0;
  return r;
}

json to_json(const LadderPoint& p) {
  return {{"t", p.t}, {"hits", p.hits}, {"n", p.n}, {"p_hat", p.p_hat}, {"ci_low", p.ci_low}, {"ci_high", p.ci_high}};
}

json to_json(const RecurrenceReport& r) {
  json rv = json::array(), h = json::array();
  for (const auto& p : r.revisit) rv.push_back(to_json(p));
  for (const auto& p : r.hit) h.push_back(to_json(p));
  return {{"revisit", rv}, {"hit", h}, {"hint", r.hint}, {"scope_note", r.scope_note}};
}

json to_json(const LifetimeReport& r) {
  json ex = json::array();
  for (const auto& p : r.exploded) ex.push_back(to_json(p));
  return {{"exploded", ex}, {"hint", r.hint}};
}

void write_ensemble_csv(std::ostream& os, const std::vector<LadderPoint>& pts) {
  os << "t,hits,n,p_hat,ci_low,ci_high\n" << std::setprecision(17);
  for (const auto& p : pts) os << p.t << ',' << p.hits << ',' << p.n << ',' << p.p_hat << ',' << p.ci_low << ',' << p.ci_high << '\n';
}

void write_paths(std::ostream& os, const PathEnsemble& e) {
  os << std::setprecision(17);
  for (std::size_t p = 0; p < e.dumps.size(); ++p) {
    os << "# path " << p << '\n';
    for (const auto& row : e.dumps[p]) {
      for (std::size_t k = 0; k < row.size(); ++k) os << (k ? " " : "") << row[k];
      os << '\n';
    }
  }
}

}  // namespace rtd::mc
