#include "rtd/scale_1d.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <optional>

#include "rtd/errors.hpp"
#include "rtd/fit.hpp"
#include "rtd/quadrature.hpp"
#include "rtd/volume_growth.hpp"

namespace rtd::scale1d {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& kind, const std::string& msg) { throw Error("scale_1d", kind, msg); }

std::vector<double> node_grid(double x_max, const std::vector<double>& kinks, int side) {
  std::vector<double> t;
  for (int i = 0; i <= 64 && i * 0.25 <= x_max; ++i) t.push_back(i * 0.25);
  for (double x = 16.0 * 1.05; x < x_max; x *= 1.05) t.push_back(x);
  t.push_back(x_max);
  for (double k : kinks)
    if (k * side > 0 && std::fabs(k) < x_max) t.push_back(std::fabs(k));
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end(), [](double a, double b) { return std::fabs(a - b) <= 1e-14 * std::max(1.0, b); }),
          t.end());
  return t;
}

}  // namespace

SymmetrizedDensity::SymmetrizedDensity(Fn phi, Fn dphi, double b, double a, std::vector<double> kinks, Options opt)
    : phi_(std::move(phi)), dphi_(std::move(dphi)), b_(b), a_(a), kinks_(std::move(kinks)), opt_(opt) {
  if (!(a_ > 0)) fail("InvalidArgument", "diffusion coefficient must be positive");
  std::sort(kinks_.begin(), kinks_.end());
  for (int s : {1, -1}) {
    Side& sd = s > 0 ? plus_ : minus_;
    const std::vector<double> t = node_grid(opt_.x_max, kinks_, s);
    sd.t.push_back(0.0);
    sd.L.push_back(0.0);
    long double acc = 0.0L;
    for (std::size_t i = 1; i < t.size(); ++i) {
      acc += segment(s * t[i - 1], s * t[i]);
      sd.t.push_back(t[i]);
      sd.L.push_back(static_cast<double>(acc));
      if (std::fabs(static_cast<double>(acc)) > opt_.log_cap) {
        sd.capped = true;
        break;
      }
    }
  }
}

double SymmetrizedDensity::log_derivative(double x) const { return (dphi_(x) + b_ / a_) / phi_(x); }

double SymmetrizedDensity::segment(double x0, double x1) const {
  if (x0 == x1) return 0.0;
  const double lo = std::min(x0, x1), hi = std::max(x0, x1);
  std::vector<double> br;
  for (double k : kinks_)
    if (k > lo && k < hi) br.push_back(k);
  quad::Options qo;
  qo.rel_tol = opt_.rel_tol;
  qo.abs_tol = 1e-15 * (hi - lo);
  double v;
  try {
    v = quad::integrate([&](double s) { return log_derivative(s); }, lo, hi, qo, br).value;
  } catch (const Error& e) {
    fail("NonIntegrableLogDerivative", "(phi' + b/a)/phi on [" + std::to_string(lo) + ", " + std::to_string(hi) +
                                           "]: " + e.what());
  }
  return x1 > x0 ? v : -v;
}

double SymmetrizedDensity::log_value(double x) const {
  if (x == 0.0) return 0.0;
  const int s = x > 0 ? 1 : -1;
  const Side& sd = side(s);
  const double t = std::fabs(x);
  if (t > sd.t.back()) {
    if (sd.capped) return sd.L.back() > 0 ? INFINITY : -INFINITY;
    fail("DomainExceeded", "|x| = " + std::to_string(t) + " beyond the tabulated range");
  }
  auto it = std::upper_bound(sd.t.begin(), sd.t.end(), t);
  std::size_t k = static_cast<std::size_t>(it - sd.t.begin()) - 1;
  if (k + 1 < sd.t.size() && sd.t[k + 1] - t < t - sd.t[k]) ++k;
  return sd.L[k] + segment(s * sd.t[k], x);
}

double SymmetrizedDensity::operator()(double x) const { return std::exp(log_value(x)); }

double SymmetrizedDensity::resolved_limit(int s) const { return side(s).t.back(); }

bool SymmetrizedDensity::capped(int s) const { return side(s).capped; }

void SymmetrizedDensity::write_csv(std::ostream& os, double x_lo, double x_hi, int n) const {
  os << "x,phi_tilde\n" << std::setprecision(17);
  for (int i = 0; i < n; ++i) {
    const double x = n == 1 ? x_lo : x_lo + (x_hi - x_lo) * i / (n - 1);
    os << x << ',' << (*this)(x) << '\n';
  }
}

std::shared_ptr<const SymmetrizedDensity> symmetrize_density(Fn phi, Fn dphi, double b, double a,
                                                             std::vector<double> kinks, const Options& opt) {
  return std::make_shared<const SymmetrizedDensity>(std::move(phi), std::move(dphi), b, a, std::move(kinks), opt);
}

std::string to_string(TailStatus s) {
  switch (s) {
    case TailStatus::Convergent: return "convergent";
    case TailStatus::Divergent: return "divergent";
    case TailStatus::Unresolved: return "unresolved";
  }
  return "?";
}

json to_json(const HalfLine& h) {
  return {{"side", h.side > 0 ? "+" : "-"},
          {"status", to_string(h.status)},
          {"value", std::isfinite(h.value) ? json(h.value) : json("inf")},
          {"error", h.error},
          {"cutoff", h.cutoff},
          {"partial", h.partial},
          {"certificate", h.certificate},
          {"details", h.details}};
}

json to_json(const Scale1DResult& r) {
  return {{"I_plus", to_json(r.plus)},
          {"I_minus", to_json(r.minus)},
          {"b", r.density->b()},
          {"a", r.density->a()},
          {"verdict", criteria::to_string(r.verdict)}};
}

// ---------------------------------------------------------------- half-line integrals

HalfLine half_line_integral(const SymmetrizedDensity& den, int side) {
  const Options& opt = den.options();
  const double limit = den.resolved_limit(side);
  auto ell = [&](double t) { return den.log_value(side * t); };
  auto dell = [&](double t) { return side * den.log_derivative(side * t); };

  HalfLine h;
  h.side = side;
  quad::Options qo;
  qo.rel_tol = opt.value_rel_tol * 0.1;
  long double I = 0.0L;
  double err = 0.0;
  double x_prev = 0.0;

  std::optional<HalfLine> power;
  std::vector<double> cutoffs;
  for (double X = 1.0; X < limit; X *= 2.0) cutoffs.push_back(X);
  cutoffs.push_back(limit);

  for (double X : cutoffs) {
    try {
      quad::Result r = quad::integrate([&](double t) { return std::exp(-ell(t)); }, x_prev, X, qo);
      I += r.value;
      err += r.error;
    } catch (const Error& e) {
      if (e.code() != "volume.NonFinite") throw;
      h.status = TailStatus::Divergent;
      h.value = INFINITY;
      h.cutoff = X;
      h.partial = static_cast<double>(I);
      h.certificate = "integrand overflow";
      return h;
    }
    x_prev = X;
    h.cutoff = X;
    h.partial = static_cast<double>(I);
    h.error = err;
    if (limit < 2.0 * X) continue;

    const int n_s = std::max(9, static_cast<int>(std::ceil(8.0 * std::log2(limit / X))) + 1);
    std::vector<double> ts(n_s), lt(n_s), l(n_s), dl(n_s);
    for (int j = 0; j < n_s; ++j) {
      ts[j] = j == n_s - 1 ? limit : X * std::pow(limit / X, static_cast<double>(j) / (n_s - 1));
      lt[j] = std::log(ts[j]);
      l[j] = ell(ts[j]);
      dl[j] = dell(ts[j]);
    }
    if (!std::all_of(l.begin(), l.end(), [](double v) { return std::isfinite(v); })) continue;

    // Exponential certificate: (log phi~)' >= lambda > 0 and non-decreasing on the tail.
    bool mono = dl[0] > 0;
    for (int j = 1; j < n_s && mono; ++j) mono = dl[j] >= dl[j - 1] * (1 - 1e-9) - 1e-12;
    if (mono) {
      const double bound = std::exp(-l[0]) / dl[0];
      if (bound <= opt.value_rel_tol * static_cast<double>(I)) {
        h.status = TailStatus::Convergent;
        h.value = static_cast<double>(I);
        h.error = err + bound;
        h.certificate = "exponential";
        h.details = {{"lambda", dl[0]}, {"tail_bound", bound}, {"samples", n_s}};
        return h;
      }
    }

    // Power-law certificate: 1/phi~ ~ C t^-p with p > 1.
    std::vector<double> y(n_s);
    for (int j = 0; j < n_s; ++j) y[j] = -l[j];
    fit::LinearFit f = fit::linear(lt, y);
    const double p = -f.slope;
    double dev = 0.0;
    for (int j = 0; j < n_s; ++j) dev = std::max(dev, std::fabs(std::expm1(y[j] - (f.intercept + f.slope * lt[j]))));
    if (dev <= opt.tail_rel_tol && p > 1.0 + opt.exponent_margin) {
      const double tail = std::exp(f.intercept) * std::pow(X, 1.0 - p) / (p - 1.0);
      const double tail_err = std::max(dev, 1e-15) * tail;
      power = h;
      power->status = TailStatus::Convergent;
      power->value = static_cast<double>(I) + tail;
      power->error = err + tail_err;
      power->certificate = "power";
      power->details = {{"p", p}, {"C", std::exp(f.intercept)}, {"max_rel_deviation", dev}, {"tail", tail}};
      // Push the cutoff out until the fitted tail is accurate enough.
      if (tail_err <= opt.value_rel_tol * power->value) return *power;
      continue;
    }

    // Divergence certificate: t / phi~(t) >= c > 0 on the tail.
    std::vector<double> z(n_s);
    for (int j = 0; j < n_s; ++j) z[j] = lt[j] - l[j];
    fit::LinearFit fz = fit::linear(lt, z);
    const double floor_z = z[0] + std::log1p(-opt.tail_rel_tol);
    const bool bounded_below =
        std::all_of(z.begin(), z.end(), [&](double v) { return v >= floor_z; }) && fz.slope >= -opt.exponent_tol;
    if (bounded_below) {
      h.status = TailStatus::Divergent;
      h.value = INFINITY;
      h.certificate = "c/x lower bound";
      h.details = {{"log_c", floor_z}, {"slope", fz.slope}, {"samples", n_s}};
      return h;
    }
  }
  if (power) {
    power->details["accuracy_target_met"] = false;
    return *power;
  }
  // Side cut at log_cap: phi~ is astronomically large there; certify with the
  // exponential bound on the last tabulated stretch.
  if (den.capped(side) && ell(limit) > 0) {
    bool mono = true;
    double prev = 0.0;
    for (int j = 0; j <= 16 && mono; ++j) {
      const double t = limit * (0.5 + j / 32.0);
      const double d = dell(t);
      mono = d > 0 && (j == 0 || d >= prev * (1 - 1e-9) - 1e-12);
      prev = d;
    }
    if (mono) {
      const double bound = std::exp(-ell(limit)) / dell(limit);
      h.status = TailStatus::Convergent;
      h.value = static_cast<double>(I);
      h.error = err + bound;
      h.certificate = "exponential (capped)";
      h.details = {{"log_value_at_cap", ell(limit)}, {"tail_bound", bound}};
      return h;
    }
  }
  h.status = TailStatus::Unresolved;
  h.value = h.partial;
  h.certificate = "none";
  return h;
}

Scale1DResult test_not_recurrent_1d(std::shared_ptr<const SymmetrizedDensity> density) {
  Scale1DResult r;
  r.density = std::move(density);
  r.plus = half_line_integral(*r.density, 1);
  r.minus = half_line_integral(*r.density, -1);
  if (r.plus.status == TailStatus::Unresolved && r.minus.status == TailStatus::Unresolved)
    fail("TailUnresolved", "neither half-line integral of 1/phi~ could be certified");
  r.verdict = (r.plus.status == TailStatus::Convergent || r.minus.status == TailStatus::Convergent)
                  ? criteria::Verdict::NotRecurrent
                  : criteria::Verdict::Inconclusive;
  return r;
}

// ---------------------------------------------------------------- models

Generic1D generic_form(const model::Model& m) {
  if (m.dim() != 1) fail("InvalidDimension", "the one-dimensional test needs d = 1");
  if (m.domain().kind != model::DomainKind::FullSpace) fail("UnsupportedModel", "the state space must be the real line");
  const auto& A = m.a_expr(0, 0);
  if (!A.is_constant()) fail("UnsupportedModel", "A must be a constant scalar");
  Generic1D g;
  g.a = A.constant_value();
  const double xs[] = {-2.5, -1.3, -0.4, 0.35, 1.1, 2.7};
  std::vector<double> vals;
  for (double x : xs) {
    const double p[1] = {x};
    vals.push_back(m.flux(0, p));
  }
  g.b = vals[0];
  for (double v : vals)
    if (std::fabs(v - g.b) > 1e-9 * std::max(1.0, std::fabs(g.b)))
      fail("UnsupportedModel", "the drift is not of the form b/phi with constant b");
  return g;
}

std::shared_ptr<const SymmetrizedDensity> symmetrize_model(const model::Model& m, const Options& opt) {
  const Generic1D g = generic_form(m);
  Fn phi = [&m](double x) {
    const double p[1] = {x};
    return m.phi(p);
  };
  Fn dphi = [&m](double x) {
    const double p[1] = {x};
    return m.dphi_expr(0)(p);
  };
  return symmetrize_density(phi, dphi, g.b, g.a, m.spec().kink_points, opt);
}

Classify1DResult classify_1d(const model::Model& m, const Classify1DOptions& opt) {
  Classify1DResult out;
  out.scale = test_not_recurrent_1d(symmetrize_model(m, opt.scale));

  criteria::Classification sc;
  sc.verdict = out.scale.verdict;
  sc.criterion_id = "not_recurrent_1d";
  sc.diagnostics = to_json(out.scale);
  sc.assumptions.push_back("drift of the form b/phi; phi' taken classically off the declared kink set");

  const double n_max = std::min(opt.n_max, m.spec().r_max.value_or(opt.n_max));
  const std::vector<double> grid = volume::default_grid(n_max, opt.per_decade);
  volume::Profiles p = volume::build_profiles_on(m, grid, opt.volume);
  volume::ASequence a = volume::compute_a(p.v, volume::default_n_list(n_max, opt.per_decade));
  out.volume_test = criteria::test_recurrence_volume(p.v, p.v2, a, m.spec().irreducible.value_or(false),
                                                     opt.thresholds, m.spec().irreducible_note);
  out.classification = criteria::merge({sc, out.volume_test});
  return out;
}

}  // namespace rtd::scale1d
