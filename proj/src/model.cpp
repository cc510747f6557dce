#include "rtd/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include <Eigen/Dense>

#include "rtd/errors.hpp"
#include "rtd/quadrature.hpp"

namespace rtd::model {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& kind, const std::string& msg) { throw Error("model", kind, msg); }

std::string lit(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  std::string s = buf;
  return v < 0 ? "(" + s + ")" : s;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key())) fail("UnknownKey", "unknown key '" + it.key() + "' in " + where);
}

std::vector<std::vector<std::string>> identity_strings(int d, const std::string& diag) {
  std::vector<std::vector<std::string>> A(static_cast<std::size_t>(d), std::vector<std::string>(static_cast<std::size_t>(d), "0"));
  for (int i = 0; i < d; ++i) A[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = diag;
  return A;
}

double unit_ball_volume(int d) { return std::pow(M_PI, d / 2.0) / std::tgamma(d / 2.0 + 1.0); }

}  // namespace

bool Domain::contains(std::span<const double> x) const {
  switch (kind) {
    case DomainKind::FullSpace: return true;
    case DomainKind::Interval:
      return open ? (x[0] > lower && x[0] < upper) : (x[0] >= lower && x[0] <= upper);
    case DomainKind::Ball: {
      double s = 0;
      for (double v : x) s += v * v;
      return open ? std::sqrt(s) < radius : std::sqrt(s) <= radius;
    }
  }
  return false;
}

double Domain::ray_exit(std::span<const double> theta) const {
  switch (kind) {
    case DomainKind::FullSpace: return INFINITY;
    case DomainKind::Interval: return theta[0] > 0 ? upper : -lower;
    case DomainKind::Ball: return radius;
  }
  return INFINITY;
}

// ---------------------------------------------------------------- config I/O

ModelSpec spec_from_json(const json& j) {
  if (!j.is_object()) fail("ConfigError", "model config must be an object");
  reject_unknown(j,
                 {"name", "dimension", "domain", "phi", "A", "B", "flux", "rho", "flags", "irreducible", "irreducible_note",
                  "assumptions", "tail_law", "singular_points", "kink_points", "params", "r_max"},
                 "model config");
  ModelSpec s;
  try {
    s.name = j.value("name", std::string("custom"));
    if (!j.contains("dimension")) fail("ConfigError", "missing 'dimension'");
    s.dimension = j.at("dimension").get<int>();
    if (s.dimension < 1 || s.dimension > kMaxDim)
      fail("UnsupportedDimension", "dimension must be between 1 and " + std::to_string(kMaxDim));
    const auto d = static_cast<std::size_t>(s.dimension);
    if (j.contains("domain")) {
      const json& dj = j.at("domain");
      reject_unknown(dj, {"kind", "bounds", "open"}, "domain");
      const std::string kind = dj.value("kind", std::string("full"));
      s.domain.open = dj.value("open", true);
      if (kind == "full") {
        s.domain.kind = DomainKind::FullSpace;
      } else if (kind == "interval") {
        if (s.dimension != 1) fail("ConfigError", "interval domains need dimension 1");
        auto b = dj.at("bounds").get<std::vector<double>>();
        if (b.size() != 2 || !(b[0] < b[1])) fail("ConfigError", "interval bounds must be [a, b] with a < b");
        s.domain.kind = DomainKind::Interval;
        s.domain.lower = b[0];
        s.domain.upper = b[1];
      } else if (kind == "ball") {
        auto b = dj.at("bounds").get<std::vector<double>>();
        if (b.size() != 1 || !(b[0] > 0)) fail("ConfigError", "ball bounds must be [R] with R > 0");
        s.domain.kind = DomainKind::Ball;
        s.domain.radius = b[0];
      } else {
        fail("ConfigError", "unknown domain kind '" + kind + "'");
      }
    }
    s.phi = j.value("phi", std::string("1"));
    if (j.contains("A")) {
      const json& a = j.at("A");
      if (a.is_string()) {
        s.A = identity_strings(s.dimension, a.get<std::string>());
      } else {
        s.A = a.get<std::vector<std::vector<std::string>>>();
      }
    } else {
      s.A = identity_strings(s.dimension, "1");
    }
    if (s.A.size() != d) fail("ConfigError", "A must be a d x d matrix");
    for (const auto& row : s.A)
      if (row.size() != d) fail("ConfigError", "A must be a d x d matrix");
    s.B = j.contains("B") ? j.at("B").get<std::vector<std::string>>() : std::vector<std::string>(d, "0");
    if (s.B.size() != d) fail("ConfigError", "B must have d components");
    if (j.contains("flux")) s.flux = j.at("flux").get<std::vector<std::string>>();
    if (!s.flux.empty() && s.flux.size() != d) fail("ConfigError", "flux must have d components");
    s.rho = j.value("rho", std::string("norm(x)"));
    if (j.contains("flags")) {
      const json& f = j.at("flags");
      reject_unknown(f, {"smooth_phi", "smooth_A", "radial"}, "flags");
      s.smooth_phi = f.value("smooth_phi", true);
      s.smooth_A = f.value("smooth_A", true);
      s.radial = f.value("radial", false);
    }
    if (j.contains("irreducible")) s.irreducible = j.at("irreducible").get<bool>();
    s.irreducible_note = j.value("irreducible_note", std::string());
    if (j.contains("assumptions")) {
      const json& a = j.at("assumptions");
      reject_unknown(a, {"condition_C", "heat_kernel_bounds"}, "assumptions");
      s.assumptions.condition_C = a.value("condition_C", true);
      s.assumptions.heat_kernel_bounds = a.value("heat_kernel_bounds", false);
    }
    if (j.contains("tail_law")) {
      const json& t = j.at("tail_law");
      reject_unknown(t, {"C", "gamma"}, "tail_law");
      s.tail_law = TailLaw{t.at("C").get<double>(), t.at("gamma").get<double>()};
    }
    if (j.contains("singular_points")) s.singular_points = j.at("singular_points").get<std::vector<std::vector<double>>>();
    for (const auto& p : s.singular_points)
      if (p.size() != d) fail("ConfigError", "singular point has wrong dimension");
    if (j.contains("kink_points")) s.kink_points = j.at("kink_points").get<std::vector<double>>();
    if (j.contains("params")) s.params = j.at("params").get<std::map<std::string, double>>();
    if (j.contains("r_max")) s.r_max = j.at("r_max").get<double>();
  } catch (const json::exception& e) {
    fail("ConfigError", e.what());
  }
  return s;
}

json spec_to_json(const ModelSpec& s) {
  json j;
  j["name"] = s.name;
  j["dimension"] = s.dimension;
  json dom;
  switch (s.domain.kind) {
    case DomainKind::FullSpace: dom["kind"] = "full"; break;
    case DomainKind::Interval:
      dom["kind"] = "interval";
      dom["bounds"] = {s.domain.lower, s.domain.upper};
      break;
    case DomainKind::Ball:
      dom["kind"] = "ball";
      dom["bounds"] = {s.domain.radius};
      break;
  }
  dom["open"] = s.domain.open;
  j["domain"] = dom;
  j["phi"] = s.phi;
  j["A"] = s.A;
  j["B"] = s.B;
  if (!s.flux.empty()) j["flux"] = s.flux;
  j["rho"] = s.rho;
  j["flags"] = {{"smooth_phi", s.smooth_phi}, {"smooth_A", s.smooth_A}, {"radial", s.radial}};
  if (s.irreducible) j["irreducible"] = *s.irreducible;
  if (!s.irreducible_note.empty()) j["irreducible_note"] = s.irreducible_note;
  j["assumptions"] = {{"condition_C", s.assumptions.condition_C},
                      {"heat_kernel_bounds", s.assumptions.heat_kernel_bounds}};
  if (s.tail_law) j["tail_law"] = {{"C", s.tail_law->C}, {"gamma", s.tail_law->gamma}};
  if (!s.singular_points.empty()) j["singular_points"] = s.singular_points;
  if (!s.kink_points.empty()) j["kink_points"] = s.kink_points;
  if (!s.params.empty()) j["params"] = s.params;
  if (s.r_max) j["r_max"] = *s.r_max;
  return j;
}

// ---------------------------------------------------------------- Model

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  const int d = spec_.dimension;
  if (d < 1 || d > kMaxDim) fail("UnsupportedDimension", "dimension must be between 1 and " + std::to_string(kMaxDim));
  if (static_cast<int>(spec_.A.size()) != d || static_cast<int>(spec_.B.size()) != d)
    fail("ConfigError", "coefficient shapes do not match the dimension");
  phi_ = expr::Expression::parse(spec_.phi, d);
  rho_ = expr::Expression::parse(spec_.rho, d);
  for (const auto& row : spec_.A) {
    if (static_cast<int>(row.size()) != d) fail("ConfigError", "A must be a d x d matrix");
    for (const auto& e : row) A_.push_back(expr::Expression::parse(e, d));
  }
  for (const auto& e : spec_.B) B_.push_back(expr::Expression::parse(e, d));
  if (!spec_.flux.empty() && static_cast<int>(spec_.flux.size()) != d)
    fail("ConfigError", "flux must have d components");
  for (const auto& e : spec_.flux) F_.push_back(expr::Expression::parse(e, d));
  for (int k = 0; k < d; ++k) {
    dphi_.push_back(phi_.derivative(k));
    drho_.push_back(rho_.derivative(k));
  }
}

void Model::grad_rho(std::span<const double> x, double* out) const {
  for (int k = 0; k < dim(); ++k) out[k] = drho_[static_cast<std::size_t>(k)](x);
}

void Model::grad_phi(std::span<const double> x, double* out) const {
  for (int k = 0; k < dim(); ++k) out[k] = dphi_[static_cast<std::size_t>(k)](x);
}

double Model::a_form(std::span<const double> x, const double* xi) const {
  const int d = dim();
  double s = 0;
  for (int i = 0; i < d; ++i) {
    if (xi[i] == 0.0) continue;
    for (int j = 0; j < d; ++j)
      if (xi[j] != 0.0) s += a(i, j, x) * xi[i] * xi[j];
  }
  return s;
}

double Model::b_dot(std::span<const double> x, const double* xi) const {
  double s = 0;
  for (int i = 0; i < dim(); ++i)
    if (xi[i] != 0.0) s += b(i, x) * xi[i];
  return s;
}

double Model::flux(int i, std::span<const double> x) const {
  if (!F_.empty()) return F_[static_cast<std::size_t>(i)](x);
  return phi(x) * b(i, x);
}

double Model::flux_dot(std::span<const double> x, const double* xi) const {
  double s = 0;
  for (int i = 0; i < dim(); ++i)
    if (xi[i] != 0.0) s += flux(i, x) * xi[i];
  return s;
}

void Model::a_sym(std::span<const double> x, double* out) const {
  const int d = dim();
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) out[i * d + j] = 0.5 * (a(i, j, x) + a(j, i, x));
}

bool Model::has_singular_origin() const {
  for (const auto& p : spec_.singular_points) {
    bool zero = true;
    for (double v : p) zero = zero && v == 0.0;
    if (zero) return true;
  }
  return false;
}

// ---------------------------------------------------------------- catalogue

std::vector<std::string> builtin_names() {
  return {"bm-d", "gauss-strongdrift", "exp-generic", "lebesgue-const-drift", "power-weight"};
}

ModelSpec builtin_spec(const std::string& name_in, const std::map<std::string, double>& params_in) {
  std::string name = name_in;
  std::map<std::string, double> params = params_in;
  if (name == "bm-1" || name == "bm-2" || name == "bm-3") {
    if (params.count("d") && params.at("d") != name.back() - '0') fail("InvalidParameter", name + " fixes d");
    params["d"] = name.back() - '0';
    name = "bm-d";
  }
  auto take = [&](const std::set<std::string>& allowed, const std::map<std::string, double>& defaults) {
    for (const auto& [k, v] : params)
      if (!allowed.count(k)) fail("InvalidParameter", "unknown parameter '" + k + "' for " + name);
    std::map<std::string, double> out = defaults;
    for (const auto& [k, v] : params) out[k] = v;
    return out;
  };
  auto as_dim = [&](double v) {
    if (v != std::floor(v) || v < 1 || v > kMaxDim) fail("InvalidParameter", "d must be an integer in [1, 3]");
    return static_cast<int>(v);
  };

  ModelSpec s;
  s.name = name_in;
  if (name == "bm-d") {
    auto p = take({"d"}, {{"d", 2}});
    const int d = as_dim(p.at("d"));
    s.dimension = d;
    s.phi = "1";
    s.A = identity_strings(d, "1");
    s.B.assign(static_cast<std::size_t>(d), "0");
    s.radial = true;
    s.irreducible = true;
    s.irreducible_note = "Gaussian transition kernel is strictly positive";
    s.assumptions.heat_kernel_bounds = true;
    s.tail_law = TailLaw{unit_ball_volume(d), static_cast<double>(d)};
    s.params = p;
  } else if (name == "gauss-strongdrift") {
    take({}, {});
    s.dimension = 1;
    s.phi = "exp(-x1^2)";
    s.A = {{"1"}};
    s.B = {"-6 * exp(x1^2)"};
    s.radial = false;
    s.irreducible = false;
    s.r_max = 20.0;
  } else if (name == "exp-generic") {
    auto p = take({"b", "a"}, {{"b", 0.5}, {"a", 0.5}});
    if (!(p.at("a") > 0)) fail("InvalidParameter", "a must be positive");
    s.dimension = 1;
    s.phi = "exp(-abs(x1))";
    s.A = {{lit(p.at("a"))}};
    s.B = {lit(p.at("b")) + " / exp(-abs(x1))"};
    s.flux = {lit(p.at("b"))};
    s.kink_points = {0.0};
    s.radial = true;
    s.irreducible = false;
    s.params = p;
  } else if (name == "lebesgue-const-drift") {
    auto p = take({"b", "a"}, {{"b", 1.0}, {"a", 0.5}});
    if (!(p.at("a") > 0)) fail("InvalidParameter", "a must be positive");
    s.dimension = 1;
    s.phi = "1";
    s.A = {{lit(p.at("a"))}};
    s.B = {lit(p.at("b"))};
    s.radial = true;
    s.irreducible = true;
    s.irreducible_note = "non-degenerate 1-d diffusion with constant coefficients";
    s.params = p;
  } else if (name == "power-weight") {
    auto p = take({"eta", "d", "swirl"}, {{"eta", 1.0}, {"d", 2}, {"swirl", 0.0}});
    const int d = as_dim(p.at("d"));
    const double eta = p.at("eta");
    if (!(eta > -d)) fail("InvalidParameter", "eta must exceed -d");
    s.dimension = d;
    s.phi = eta == 0.0 ? "1" : "norm(x)^" + lit(eta);
    s.A = identity_strings(d, "1");
    s.B.assign(static_cast<std::size_t>(d), "0");
    const double swirl = p.at("swirl");
    if (swirl != 0.0) {
      if (d != 2) fail("InvalidParameter", "swirl drift needs d = 2");
      s.B = {lit(-swirl) + " * x2", lit(swirl) + " * x1"};
    }
    if (eta != 0.0) s.singular_points = {std::vector<double>(static_cast<std::size_t>(d), 0.0)};
    s.radial = true;
    s.irreducible = true;
    s.irreducible_note = "positive weight, uniformly elliptic off the origin";
    s.assumptions.heat_kernel_bounds = (eta > -d && eta < d);
    const double sphere = d * unit_ball_volume(d);
    s.tail_law = TailLaw{sphere / (d + eta), d + eta};
    s.params = p;
  } else {
    fail("UnknownModel", "no built-in model named '" + name_in + "'");
  }
  return s;
}

Model builtin_model(const std::string& name, const std::map<std::string, double>& params) {
  return Model(builtin_spec(name, params));
}

// ---------------------------------------------------------------- checks

void halton(std::uint64_t index, int d, double* out) {
  static const int primes[] = {2, 3, 5, 7, 11, 13};
  for (int k = 0; k < d; ++k) {
    const int b = primes[k];
    double f = 1.0, r = 0.0;
    std::uint64_t i = index + 1;
    while (i > 0) {
      f /= b;
      r += f * static_cast<double>(i % static_cast<std::uint64_t>(b));
      i /= static_cast<std::uint64_t>(b);
    }
    out[k] = r;
  }
}

EllipticityEstimate check_ellipticity(const Model& m, const Box& region, int n_samples) {
  const int d = m.dim();
  if (n_samples < 1) fail("InvalidArgument", "n_samples must be at least 1");
  if (static_cast<int>(region.lo.size()) != d || static_cast<int>(region.hi.size()) != d)
    fail("InvalidArgument", "region has wrong dimension");
  EllipticityEstimate est;
  est.q_min = INFINITY;
  est.q_max = 0.0;
  Eigen::MatrixXd S(d, d);
  double u[kMaxDim];
  Point x{};
  std::uint64_t idx = 0;
  const std::uint64_t max_tries = static_cast<std::uint64_t>(n_samples) * 64;
  while (static_cast<int>(est.samples) < n_samples && idx < max_tries) {
    halton(idx++, d, u);
    for (int k = 0; k < d; ++k) x[static_cast<std::size_t>(k)] = region.lo[static_cast<std::size_t>(k)] + u[k] * (region.hi[static_cast<std::size_t>(k)] - region.lo[static_cast<std::size_t>(k)]);
    std::span<const double> xs(x.data(), static_cast<std::size_t>(d));
    if (!m.domain().contains(xs)) continue;
    bool near_singular = false;
    for (const auto& p : m.spec().singular_points) {
      double dist = 0;
      for (int k = 0; k < d; ++k) dist += std::pow(x[static_cast<std::size_t>(k)] - p[static_cast<std::size_t>(k)], 2);
      near_singular = near_singular || std::sqrt(dist) < 1e-3;
    }
    if (near_singular) continue;
    double a[kMaxDim * kMaxDim];
    m.a_sym(xs, a);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) S(i, j) = a[i * d + j];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues()(0), hi = es.eigenvalues()(d - 1);
    if (!(lo > 0) || !std::isfinite(hi)) {
      std::string where;
      for (int k = 0; k < d; ++k) where += (k ? ", " : "") + std::to_string(x[static_cast<std::size_t>(k)]);
      fail("NonPositiveDefinite", "symmetric part of A is not positive definite at (" + where + ")");
    }
    est.quotients.emplace_back(lo, hi);
    est.q_min = std::min(est.q_min, lo);
    est.q_max = std::max(est.q_max, hi);
    ++est.samples;
  }
  if (est.samples == 0) fail("InvalidArgument", "region does not intersect the domain");
  est.nu = std::max({1.0, est.q_max, 1.0 / est.q_min});
  return est;
}

namespace {

// Test-function supports: centres from a Halton lattice, radii cycling 0.5, 1, 1.5.
std::vector<std::pair<Point, double>> bump_family(const Model& m, int n) {
  const int d = m.dim();
  double lo = -2.0, hi = 2.0, rmax = 1.5;
  const Domain& dom = m.domain();
  if (dom.kind == DomainKind::Interval) {
    lo = std::max(lo, dom.lower);
    hi = std::min(hi, dom.upper);
    rmax = std::min(rmax, 0.25 * (hi - lo));
  } else if (dom.kind == DomainKind::Ball) {
    lo = std::max(lo, -dom.radius / std::sqrt(static_cast<double>(d)));
    hi = -lo;
    rmax = std::min(rmax, 0.25 * dom.radius);
  }
  std::vector<std::pair<Point, double>> out;
  double u[kMaxDim];
  for (int k = 0; k < n; ++k) {
    const double r = std::min(rmax, 0.5 * (1 + k % 3));
    halton(static_cast<std::uint64_t>(k), d, u);
    Point c{};
    for (int i = 0; i < d; ++i) {
      double a = lo, b = hi;
      if (dom.kind != DomainKind::FullSpace) {
        a = lo + r;
        b = hi - r;
      }
      c[static_cast<std::size_t>(i)] = a + u[i] * std::max(0.0, b - a);
    }
    if (dom.kind == DomainKind::Ball) {
      double nc = 0;
      for (int i = 0; i < d; ++i) nc += c[static_cast<std::size_t>(i)] * c[static_cast<std::size_t>(i)];
      nc = std::sqrt(nc);
      if (nc + r >= dom.radius)
        for (int i = 0; i < d; ++i) c[static_cast<std::size_t>(i)] *= (dom.radius - r) * 0.99 / std::max(nc, 1e-300);
    }
    out.emplace_back(c, r);
  }
  return out;
}

}  // namespace

ValidationReport check_divergence_free(const Model& m, int n_test_functions, double tol) {
  const int d = m.dim();
  ValidationReport rep;
  quad::Options opt;
  opt.rel_tol = 1e-9;
  for (const auto& [c, r] : bump_family(m, n_test_functions)) {
    // f(x) = exp(-1 / (1 - |x-c|^2 / r^2)); grad f = f * (-2 (x-c) / r^2) / (1 - q)^2.
    auto grad_f = [&](std::span<const double> x, double* g) {
      double q = 0;
      for (int i = 0; i < d; ++i) q += std::pow(x[static_cast<std::size_t>(i)] - c[static_cast<std::size_t>(i)], 2);
      q /= r * r;
      if (q >= 1.0) {
        for (int i = 0; i < d; ++i) g[i] = 0.0;
        return;
      }
      const double f = std::exp(-1.0 / (1.0 - q));
      const double fac = f * (-2.0 / (r * r)) / ((1.0 - q) * (1.0 - q));
      for (int i = 0; i < d; ++i) g[i] = fac * (x[static_cast<std::size_t>(i)] - c[static_cast<std::size_t>(i)]);
    };
    auto limits = [&](std::span<const double>) { return std::pair<double, double>{0.0, r}; };
    std::vector<double> breaks;
    for (double k : m.spec().kink_points) {
      const double s = std::fabs(k - c[0]);
      if (d == 1 && s > 0 && s < r) breaks.push_back(s);
    }
    std::span<const double> cs(c.data(), static_cast<std::size_t>(d));
    const double res = quad::integrate_spherical(
                           d, cs,
                           [&](std::span<const double> x) {
                             double g[kMaxDim];
                             grad_f(x, g);
                             return m.flux_dot(x, g);
                           },
                           limits, opt, breaks)
                           .value;
    opt.rel_tol = 1e-6;
    const double scale = quad::integrate_spherical(
                             d, cs,
                             [&](std::span<const double> x) {
                               double g[kMaxDim];
                               grad_f(x, g);
                               double bb = 0, gg = 0;
                               for (int i = 0; i < d; ++i) {
                                 bb += std::pow(m.b(i, x), 2);
                                 gg += g[i] * g[i];
                               }
                               return std::sqrt(bb * gg) * m.phi(x);
                             },
                             limits, opt, breaks)
                             .value;
    opt.rel_tol = 1e-9;
    std::string id = "bump(c=[";
    for (int i = 0; i < d; ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s%.4g", i ? "," : "", c[static_cast<std::size_t>(i)]);
      id += buf;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "],r=%.3g)", r);
    id += buf;
    rep.divergence_free_residuals.emplace_back(id, std::fabs(res));
    rep.residual_scales.push_back(scale);
    if (!(std::fabs(res) <= tol * scale)) {
      rep.passed = false;
      rep.warnings.push_back("divergence-free residual " + std::to_string(res) + " exceeds tolerance on " + id);
    }
  }
  return rep;
}

ValidationReport validate_model(const Model& m) {
  const int d = m.dim();
  ValidationReport rep = check_divergence_free(m, 9, 1e-6);
  const Domain& dom = m.domain();
  // Nested validation boxes.
  for (double R : {1.0, 4.0}) {
    double lim = R;
    if (dom.kind == DomainKind::Interval) lim = std::min(R, std::max(std::fabs(dom.lower), std::fabs(dom.upper)));
    if (dom.kind == DomainKind::Ball) lim = std::min(R, dom.radius);
    Box box{std::vector<double>(static_cast<std::size_t>(d), -lim), std::vector<double>(static_cast<std::size_t>(d), lim)};
    if (dom.kind == DomainKind::Interval) {
      box.lo[0] = std::max(-lim, dom.lower);
      box.hi[0] = std::min(lim, dom.upper);
    }
    rep.ellipticity_bounds.push_back(check_ellipticity(m, box, 256));
  }
  // phi > 0 on a sample.
  double u[kMaxDim];
  Point x{};
  for (std::uint64_t k = 0; k < 512; ++k) {
    halton(k, d, u);
    for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = -8.0 + 16.0 * u[i];
    std::span<const double> xs(x.data(), static_cast<std::size_t>(d));
    if (!dom.contains(xs)) continue;
    const double p = m.phi(xs);
    if (!(p > 0) && std::isfinite(p)) {
      rep.passed = false;
      rep.warnings.push_back("density is not positive at a sampled point");
      break;
    }
  }
  // Sublevel sets: rho must grow along sampled rays (bounded, exhausting E_r).
  if (dom.kind == DomainKind::FullSpace) {
    for (std::uint64_t k = 0; k < 16; ++k) {
      halton(k, d, u);
      double th[kMaxDim], nrm = 0;
      for (int i = 0; i < d; ++i) {
        th[i] = 2 * u[i] - 1 + (i == 0 ? 1e-3 : 0.0);
        nrm += th[i] * th[i];
      }
      nrm = std::sqrt(nrm);
      double prev = -INFINITY;
      bool grows = true;
      for (double R : {1.0, 10.0, 100.0, 1000.0}) {
        for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = R * th[i] / nrm;
        const double r = m.rho(std::span<const double>(x.data(), static_cast<std::size_t>(d)));
        if (!(r > prev)) grows = false;
        prev = r;
      }
      if (!grows) {
        rep.passed = false;
        rep.warnings.push_back("gauge does not increase along a sampled ray; sublevel sets may be unbounded");
        break;
      }
    }
  }
  // Declared flux against phi * B where both are representable.
  if (m.has_flux()) {
    for (std::uint64_t k = 0; k < 64; ++k) {
      halton(k, d, u);
      for (int i = 0; i < d; ++i) x[static_cast<std::size_t>(i)] = -8.0 + 16.0 * u[i];
      std::span<const double> xs(x.data(), static_cast<std::size_t>(d));
      if (!dom.contains(xs)) continue;
      bool bad = false;
      for (int i = 0; i < d; ++i) {
        const double direct = m.phi(xs) * m.b(i, xs), declared = m.flux(i, xs);
        if (std::isfinite(direct) && std::fabs(direct - declared) > 1e-8 * std::max(1.0, std::fabs(direct))) bad = true;
      }
      if (bad) {
        rep.passed = false;
        rep.warnings.push_back("declared flux differs from phi * B at a sampled point");
        break;
      }
    }
  }
  if (!m.spec().assumptions.condition_C) rep.warnings.push_back("condition (C) not asserted for this model");
  return rep;
}

json to_json(const ValidationReport& r) {
  json j;
  json res = json::array();
  for (std::size_t i = 0; i < r.divergence_free_residuals.size(); ++i)
    res.push_back({{"test_function", r.divergence_free_residuals[i].first},
                   {"residual", r.divergence_free_residuals[i].second},
                   {"scale", i < r.residual_scales.size() ? r.residual_scales[i] : 0.0}});
  j["divergence_free_residuals"] = res;
  json ell = json::array();
  for (const auto& e : r.ellipticity_bounds)
    ell.push_back({{"nu", e.nu}, {"q_min", e.q_min}, {"q_max", e.q_max}, {"samples", e.samples}});
  j["ellipticity_bounds"] = ell;
  j["warnings"] = r.warnings;
  j["passed"] = r.passed;
  return j;
}

}  // namespace rtd::model
