#include "rtd/volume_growth.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "rtd/errors.hpp"

namespace rtd::volume {

using model::kMaxDim;
using model::Model;

namespace {

[[noreturn]] void fail(const std::string& kind, const std::string& msg) { throw Error("volume", kind, msg); }

double sphere_area(int d) {
  switch (d) {
    case 1: return 2.0;
    case 2: return 2.0 * M_PI;
    default: return 4.0 * M_PI;
  }
}

// Largest s with rho(s theta) < r inside the domain, assuming rho increases along rays.
double ray_extent(const Model& m, std::span<const double> theta, double r) {
  if (r <= 0) return 0.0;
  const int d = m.dim();
  const double exit = m.domain().ray_exit(theta);
  if (m.rho_expr().is_norm()) return std::min(r, exit);
  double x[kMaxDim];
  auto rho_at = [&](double s) {
    for (int i = 0; i < d; ++i) x[i] = s * theta[static_cast<std::size_t>(i)];
    return m.rho(std::span<const double>(x, static_cast<std::size_t>(d)));
  };
  double lo = 0.0, hi = 1.0;
  while (rho_at(hi) < r) {
    if (hi >= exit) return exit;
    lo = hi;
    hi *= 2.0;
    if (hi > 1e15) fail("UnboundedSublevelSet", "sublevel set of the gauge is unbounded along a ray");
  }
  hi = std::min(hi, exit);
  if (rho_at(hi) < r) return hi;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (rho_at(mid) < r ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::string to_string(Kind k) {
  switch (k) {
    case Kind::V1: return "v1";
    case Kind::V2: return "v2";
    case Kind::V: return "v";
  }
  return "?";
}

double v1_density(const Model& m, std::span<const double> x) {
  double g[kMaxDim];
  m.grad_rho(x, g);
  return m.a_form(x, g) * m.phi(x);
}

double v2_density(const Model& m, std::span<const double> x) {
  double g[kMaxDim];
  m.grad_rho(x, g);
  const double bd = m.flux_dot(x, g);
  if (bd == 0.0) return 0.0;
  return m.rho(x) * std::fabs(bd);
}

bool radial_spot_check(const Model& m) {
  const int d = m.dim();
  if (!m.spec().radial) return false;
  static const double dirs[][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {0.6, 0.8, 0}, {-0.48, 0.6, 0.64}, {-1, 0, 0}};
  for (double s : {0.3, 1.0, 2.7, 9.0, 31.0}) {
    double ref[4] = {0, 0, 0, 0};
    for (int k = 0; k < 6; ++k) {
      double th[kMaxDim] = {0, 0, 0};
      double nrm = 0;
      for (int i = 0; i < d; ++i) {
        th[i] = dirs[k][i];
        nrm += th[i] * th[i];
      }
      if (nrm == 0) continue;
      nrm = std::sqrt(nrm);
      double x[kMaxDim];
      for (int i = 0; i < d; ++i) x[i] = s * th[i] / nrm;
      std::span<const double> xs(x, static_cast<std::size_t>(d));
      if (!m.domain().contains(xs)) continue;
      const double vals[4] = {m.phi(xs), v1_density(m, xs), v2_density(m, xs), m.rho(xs)};
      for (int q = 0; q < 4; ++q) {
        if (k == 0) {
          ref[q] = vals[q];
        } else if (std::fabs(vals[q] - ref[q]) > 1e-9 * std::max(1.0, std::fabs(ref[q]))) {
          return false;
        }
      }
    }
  }
  return true;
}

Estimate shell_integral(const Model& m, double r_lo, double r_hi, const PointIntegrand& g, const Options& opt,
                        bool radial_ok) {
  const int d = m.dim();
  Estimate est;
  if (!(r_hi > r_lo)) return est;
  const bool excise = m.has_singular_origin();
  const double s_floor = excise ? opt.excision : 0.0;
  std::vector<double> breaks;
  for (double k : m.spec().kink_points)
    if (k != 0.0) breaks.push_back(std::fabs(k));

  bool radial = false;
  if (opt.method == Method::Radial) {
    if (!m.spec().radial) fail("NotRadial", "radial reduction requested for a model not declared radial");
    radial = true;
  } else if (opt.method == Method::Auto) {
    radial = radial_ok && radial_spot_check(m);
  }

  const double zero[kMaxDim] = {0, 0, 0};
  std::span<const double> origin(zero, static_cast<std::size_t>(d));
  if (radial) {
    double e1[kMaxDim] = {1, 0, 0};
    std::span<const double> th(e1, static_cast<std::size_t>(d));
    const double lo = std::max(s_floor, ray_extent(m, th, r_lo));
    const double hi = ray_extent(m, th, r_hi);
    if (hi > lo) {
      double x[kMaxDim] = {0, 0, 0};
      quad::Result r = quad::integrate(
          [&](double s) {
            x[0] = s;
            const double v = g(std::span<const double>(x, static_cast<std::size_t>(d)));
            return d == 1 ? v : v * std::pow(s, d - 1);
          },
          lo, hi, opt.quad, breaks);
      est.value = sphere_area(d) * r.value;
      est.error = sphere_area(d) * r.error;
    }
    est.radial = true;
  } else {
    auto limits = [&](std::span<const double> th) {
      return std::pair<double, double>{std::max(s_floor, ray_extent(m, th, r_lo)), ray_extent(m, th, r_hi)};
    };
    quad::Result r = quad::integrate_spherical(d, origin, g, limits, opt.quad, breaks);
    est.value = r.value;
    est.error = r.error;
  }
  if (excise && r_lo <= 0.0) {
    double x[kMaxDim] = {opt.excision, 0, 0};
    const double ball = std::pow(M_PI, d / 2.0) / std::tgamma(d / 2.0 + 1.0) * std::pow(opt.excision, d);
    est.excised = std::fabs(g(std::span<const double>(x, static_cast<std::size_t>(d)))) * ball;
  }
  return est;
}

Estimate eval_v1(const Model& m, double r, const Options& opt) {
  if (!(r > 0)) fail("InvalidArgument", "r must be positive");
  return shell_integral(m, 0.0, r, [&](std::span<const double> x) { return v1_density(m, x); }, opt);
}

Estimate eval_v2(const Model& m, double r, const Options& opt) {
  if (!(r > 0)) fail("InvalidArgument", "r must be positive");
  return shell_integral(m, 0.0, r, [&](std::span<const double> x) { return v2_density(m, x); }, opt);
}

Estimate eval_v(const Model& m, double r, const Options& opt) {
  if (!(r > 0)) fail("InvalidArgument", "r must be positive");
  return shell_integral(
      m, 0.0, r, [&](std::span<const double> x) { return v1_density(m, x) + v2_density(m, x); }, opt);
}

// ---------------------------------------------------------------- GrowthProfile

namespace {

// Fritsch-Butland derivative estimates (shape preserving, as in SciPy's PCHIP).
std::vector<double> pchip_slopes(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  std::vector<double> d(n, 0.0);
  if (n == 2) {
    d[0] = d[1] = (y[1] - y[0]) / (x[1] - x[0]);
    return d;
  }
  std::vector<double> h(n - 1), del(n - 1);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    h[k] = x[k + 1] - x[k];
    del[k] = (y[k + 1] - y[k]) / h[k];
  }
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (del[k - 1] * del[k] <= 0) {
      d[k] = 0.0;
    } else {
      const double w1 = 2 * h[k] + h[k - 1], w2 = h[k] + 2 * h[k - 1];
      d[k] = (w1 + w2) / (w1 / del[k - 1] + w2 / del[k]);
    }
  }
  auto edge = [](double h0, double h1, double m0, double m1) {
    double dd = ((2 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if (dd * m0 <= 0) return 0.0;
    if (m0 * m1 <= 0 && std::fabs(dd) > std::fabs(3 * m0)) return 3 * m0;
    return dd;
  };
  d[0] = edge(h[0], h[1], del[0], del[1]);
  d[n - 1] = edge(h[n - 2], h[n - 3], del[n - 2], del[n - 3]);
  return d;
}

}  // namespace

GrowthProfile::GrowthProfile(Kind kind, std::vector<double> radii, std::vector<double> values)
    : kind_(kind), radii_(std::move(radii)), values_(std::move(values)) {
  if (radii_.size() < 2 || radii_.size() != values_.size()) fail("InvalidProfile", "need at least two samples");
  for (std::size_t i = 0; i < radii_.size(); ++i) {
    if (!(radii_[i] > 0) || (i && !(radii_[i] > radii_[i - 1]))) fail("InvalidProfile", "radii must increase strictly");
    if (!(values_[i] >= 0) || !std::isfinite(values_[i])) fail("InvalidProfile", "values must be finite and non-negative");
    if (i && values_[i] < values_[i - 1]) {
      std::ostringstream os;
      os << "value decreases between r=" << radii_[i - 1] << " and r=" << radii_[i];
      fail("MonotonicityViolation", os.str());
    }
  }
  loglog_ = values_.front() > 0;
  X_.resize(radii_.size());
  Y_.resize(radii_.size());
  for (std::size_t i = 0; i < radii_.size(); ++i) {
    X_[i] = std::log(radii_[i]);
    Y_[i] = loglog_ ? std::log(values_[i]) : values_[i];
  }
  D_ = pchip_slopes(X_, Y_);
}

double GrowthProfile::positivity_threshold() const {
  for (std::size_t i = 0; i < radii_.size(); ++i)
    if (values_[i] > 0) return radii_[i];
  return INFINITY;
}

std::vector<double> GrowthProfile::increments() const {
  std::vector<double> inc(values_.size());
  inc[0] = values_[0];
  for (std::size_t i = 1; i < values_.size(); ++i) inc[i] = values_[i] - values_[i - 1];
  return inc;
}

bool GrowthProfile::covers(double lo, double hi) const {
  const double slack = 1e-12;
  return lo >= r_min() * (1 - slack) && hi <= r_max() * (1 + slack);
}

void GrowthProfile::locate(double r, std::size_t& k, double& t, double& h) const {
  if (!(r >= r_min() * (1 - 1e-12) && r <= r_max() * (1 + 1e-12))) {
    std::ostringstream os;
    os << std::setprecision(10) << "r=" << r << " outside the sampled range [" << r_min() << ", " << r_max() << "]";
    fail("DomainExceeded", os.str());
  }
  const double X = std::log(std::clamp(r, r_min(), r_max()));
  auto it = std::upper_bound(X_.begin(), X_.end(), X);
  k = it == X_.begin() ? 0 : static_cast<std::size_t>(it - X_.begin()) - 1;
  if (k + 1 >= X_.size()) k = X_.size() - 2;
  h = X_[k + 1] - X_[k];
  t = (X - X_[k]) / h;
}

double GrowthProfile::operator()(double r) const {
  std::size_t k;
  double t, h;
  locate(r, k, t, h);
  const double t2 = t * t, t3 = t2 * t;
  const double Y = (2 * t3 - 3 * t2 + 1) * Y_[k] + (t3 - 2 * t2 + t) * h * D_[k] + (-2 * t3 + 3 * t2) * Y_[k + 1] +
                   (t3 - t2) * h * D_[k + 1];
  return loglog_ ? std::exp(Y) : Y;
}

double GrowthProfile::derivative(double r) const {
  std::size_t k;
  double t, h;
  locate(r, k, t, h);
  const double t2 = t * t;
  const double dY = ((6 * t2 - 6 * t) * Y_[k] + (3 * t2 - 4 * t + 1) * h * D_[k] + (-6 * t2 + 6 * t) * Y_[k + 1] +
                     (3 * t2 - 2 * t) * h * D_[k + 1]) /
                    h;
  return loglog_ ? (*this)(r) * dY / r : dY / r;
}

// ---------------------------------------------------------------- building

std::vector<double> geometric_grid(double r_min, double r_max, int m) {
  if (!(r_min > 0) || !(r_max > r_min) || m < 2) fail("InvalidArgument", "geometric grid needs 0 < r_min < r_max, m >= 2");
  std::vector<double> g(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) g[static_cast<std::size_t>(i)] = r_min * std::pow(r_max / r_min, static_cast<double>(i) / (m - 1));
  g.front() = r_min;
  g.back() = r_max;
  return g;
}

std::vector<double> default_grid(double r_max, int per_decade, double r_min) {
  if (!(r_max > 1) || per_decade < 1) fail("InvalidArgument", "default grid needs r_max > 1");
  std::vector<double> g{r_min};
  const int k0 = static_cast<int>(std::floor(per_decade * std::log10(r_min))) + 1;
  for (int k = k0;; ++k) {
    const double r = std::pow(10.0, static_cast<double>(k) / per_decade);
    if (r >= r_max * (1 - 1e-9)) break;
    if (r > g.back() * 1.02 && r < r_max / 1.02) g.push_back(r);
  }
  g.push_back(r_max);
  return g;
}

std::vector<double> default_n_list(double n_max, int per_decade) {
  std::vector<double> n{1.0};
  for (int k = 1;; ++k) {
    const double r = std::pow(10.0, static_cast<double>(k) / per_decade);
    if (r >= n_max * (1 - 1e-9)) break;
    if (r < n_max / 1.02) n.push_back(r);
  }
  if (n_max > 1) n.push_back(n_max);
  return n;
}

namespace {

std::vector<double> cumulative(const std::vector<double>& shells) {
  std::vector<double> out(shells.size());
  double s = 0;
  for (std::size_t i = 0; i < shells.size(); ++i) {
    s += shells[i];
    out[i] = s;
  }
  return out;
}

}  // namespace

GrowthProfile build_profile_on(const Model& m, Kind kind, const std::vector<double>& radii, const Options& opt) {
  const bool radial = radial_spot_check(m);
  Options o = opt;
  if (o.method == Method::Auto) o.method = radial ? Method::Radial : Method::Full;
  std::vector<double> shells;
  shells.reserve(radii.size());
  double prev = 0.0;
  for (double r : radii) {
    PointIntegrand g;
    switch (kind) {
      case Kind::V1: g = [&](std::span<const double> x) { return v1_density(m, x); }; break;
      case Kind::V2: g = [&](std::span<const double> x) { return v2_density(m, x); }; break;
      case Kind::V: g = [&](std::span<const double> x) { return v1_density(m, x) + v2_density(m, x); }; break;
    }
    shells.push_back(shell_integral(m, prev, r, g, o).value);
    prev = r;
  }
  return GrowthProfile(kind, radii, cumulative(shells));
}

GrowthProfile build_profile(const Model& m, Kind kind, double r_max, int m_points, const Options& opt, double r_min) {
  if (!(r_max > 1)) fail("InvalidArgument", "r_max must exceed 1");
  if (m_points < 8) fail("InvalidArgument", "profiles need at least 8 grid points");
  return build_profile_on(m, kind, geometric_grid(r_min, r_max, m_points), opt);
}

Profiles build_profiles_on(const Model& m, const std::vector<double>& radii, const Options& opt) {
  const bool radial = radial_spot_check(m);
  Options o = opt;
  if (o.method == Method::Auto) o.method = radial ? Method::Radial : Method::Full;
  std::vector<double> s1, s2;
  double prev = 0.0;
  for (double r : radii) {
    s1.push_back(shell_integral(m, prev, r, [&](std::span<const double> x) { return v1_density(m, x); }, o).value);
    s2.push_back(shell_integral(m, prev, r, [&](std::span<const double> x) { return v2_density(m, x); }, o).value);
    prev = r;
  }
  std::vector<double> c1 = cumulative(s1), c2 = cumulative(s2), c(radii.size());
  for (std::size_t i = 0; i < radii.size(); ++i) c[i] = c1[i] + c2[i];
  return {GrowthProfile(Kind::V1, radii, c1), GrowthProfile(Kind::V2, radii, c2), GrowthProfile(Kind::V, radii, c)};
}

void write_profiles_csv(std::ostream& os, const Profiles& p) {
  os << "r,v1,v2,v\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < p.v.radii().size(); ++i)
    os << p.v.radii()[i] << ',' << p.v1.values()[i] << ',' << p.v2.values()[i] << ',' << p.v.values()[i] << '\n';
}

// ---------------------------------------------------------------- a_n

ASequence compute_a(const GrowthProfile& v, std::vector<double> n_list) {
  std::sort(n_list.begin(), n_list.end());
  n_list.erase(std::unique(n_list.begin(), n_list.end()), n_list.end());
  if (n_list.empty()) fail("InvalidArgument", "empty n list");
  if (n_list.front() < 1.0) fail("InvalidArgument", "n values must be at least 1");
  if (n_list.back() > v.r_max() * (1 + 1e-12)) {
    std::ostringstream os;
    os << "n=" << n_list.back() << " exceeds r_max=" << v.r_max();
    fail("DomainExceeded", os.str());
  }
  ASequence out;
  quad::Options qo;
  qo.rel_tol = 1e-10;
  double acc = 0.0, prev = 1.0;
  if (n_list.back() > 1.0 && !(v(1.0) > 0)) fail("NonPositiveProfile", "profile must be positive on [1, n_max]");
  for (double n : n_list) {
    if (n > prev) {
      acc += quad::integrate([&](double r) { return r / v(r); }, prev, n, qo, v.radii()).value;
    }
    prev = n;
    out.n.push_back(n);
    out.a.push_back(acc);
  }
  // Tail diagnostics over the top decade.
  std::vector<double> tn, ta;
  for (std::size_t i = 0; i < out.n.size(); ++i)
    if (out.n[i] >= out.n.back() / 10.0) {
      tn.push_back(out.n[i]);
      ta.push_back(out.a[i]);
    }
  if (tn.size() >= 4) {
    out.tail_fit = fit::fit_growth_law(tn, ta);
    out.has_fit = true;
  }
  return out;
}

// ---------------------------------------------------------------- mollifier

namespace {

double bump(double u) { return std::fabs(u) < 1.0 ? std::exp(-1.0 / (1.0 - u * u)) : 0.0; }

double bump_mass() {
  static const double mass = [] {
    quad::Options o;
    o.rel_tol = 1e-14;
    return quad::integrate(bump, -1.0, 1.0, o).value;
  }();
  return mass;
}

}  // namespace

double mollifier(double u) { return bump(u) / bump_mass(); }

MollifyResult mollify_check(const GrowthProfile& v1, double n, const std::vector<double>& eps_list) {
  MollifyResult res;
  res.n = n;
  if (n < 1.0) fail("InvalidArgument", "n must be at least 1");
  double emax = 0;
  for (double e : eps_list) {
    if (!(e > 0)) fail("InvalidArgument", "mollifier widths must be positive");
    emax = std::max(emax, e);
  }
  if (!v1.covers(1.0 - emax, n + emax)) fail("DomainExceeded", "profile must cover [1 - eps, n + eps]");
  for (std::size_t i = 1; i < v1.radii().size(); ++i) {
    const double r0 = v1.radii()[i - 1], r1 = v1.radii()[i];
    if (r1 >= 1.0 - emax && r0 <= n + emax && !(v1.values()[i] > v1.values()[i - 1]))
      fail("NotStrictlyIncreasing", "profile is flat on [" + std::to_string(r0) + ", " + std::to_string(r1) + "]");
  }
  quad::Options qo;
  qo.rel_tol = 1e-12;
  const double a = n > 1.0 ? quad::integrate([&](double r) { return r / v1(r); }, 1.0, n, qo, v1.radii()).value : 0.0;
  res.rhs = 2.0 * a + 1.0 / v1(1.0) - n * n / v1(n);

  quad::Options inner;
  inner.rel_tol = 1e-13;
  for (double eps : eps_list) {
    // v1^eps and its derivative by convolution with the rescaled bump.
    auto smooth = [&](double r, bool deriv) {
      return quad::integrate(
                 [&](double u) {
                   const double w = mollifier(u);
                   if (w == 0.0) return 0.0;
                   return w * (deriv ? v1.derivative(r - eps * u) : v1(r - eps * u));
                 },
                 -1.0, 1.0, inner)
          .value;
    };
    double lhs = 0.0;
    if (n > 1.0) {
      lhs = quad::integrate(
                [&](double r) {
                  const double ve = smooth(r, false);
                  return r * r / (ve * ve) * smooth(r, true);
                },
                1.0, n, qo)
                .value;
    }
    res.eps.push_back(eps);
    res.lhs.push_back(lhs);
    res.residual.push_back(std::fabs(lhs - res.rhs));
  }
  return res;
}

}  // namespace rtd::volume
