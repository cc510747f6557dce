#include "rtd/criteria.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "rtd/errors.hpp"
#include "rtd/fit.hpp"

namespace rtd::criteria {

using nlohmann::json;
using volume::GrowthProfile;

namespace {

[[noreturn]] void fail(const std::string& kind, const std::string& msg) { throw Error("criteria", kind, msg); }

const char* kLimitRule = "limits decided from finite data by tail regression over the top decade";

struct Tail {
  std::vector<double> r, v;
};

Tail top_decade(const std::vector<double>& r, const std::vector<double>& v, int min_points, const std::string& what) {
  Tail t;
  const double top = r.back();
  for (std::size_t i = 0; i < r.size(); ++i)
    if (r[i] >= top / 10.0 * (1 - 1e-12)) {
      t.r.push_back(r[i]);
      t.v.push_back(v[i]);
    }
  if (static_cast<int>(t.r.size()) < min_points) {
    std::ostringstream os;
    os << what << ": " << t.r.size() << " points in the top decade, need " << min_points;
    fail("InsufficientTail", os.str());
  }
  return t;
}

json law_json(const fit::GrowthLaw& g) {
  return {{"law", fit::to_string(g.kind)}, {"c0", g.c0}, {"c1", g.c1}, {"p", g.p}, {"r2", g.r2}, {"sse", g.sse}};
}

std::vector<double> logs(const std::vector<double>& v) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::log(v[i]);
  return out;
}

}  // namespace

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Transient: return "Transient";
    case Verdict::Recurrent: return "Recurrent";
    case Verdict::NotTransient: return "NotTransient";
    case Verdict::NotRecurrent: return "NotRecurrent";
    case Verdict::Inconclusive: return "Inconclusive";
  }
  return "?";
}

json to_json(const Classification& c) {
  return {{"verdict", to_string(c.verdict)},
          {"criterion_id", c.criterion_id},
          {"diagnostics", c.diagnostics},
          {"assumptions", c.assumptions}};
}

json to_json(const Thresholds& t) {
  return {{"r2_min", t.r2_min},           {"ratio_limit", t.ratio_limit},   {"alpha_margin", t.alpha_margin},
          {"exponent_tol", t.exponent_tol}, {"tail_rel_tol", t.tail_rel_tol}, {"gamma_margin", t.gamma_margin},
          {"min_tail_points", t.min_tail_points}};
}

// ---------------------------------------------------------------- volume test

Classification test_recurrence_volume(const GrowthProfile& v, const GrowthProfile& v2, const volume::ASequence& a,
                                      bool irreducible, const Thresholds& th, const std::string& irreducible_note) {
  if (a.n.empty()) fail("InsufficientTail", "empty a-sequence");
  const double n_max = a.n.back();
  if (!v.covers(1.0, n_max) || !v2.covers(1.0, n_max)) fail("DomainExceeded", "profiles must cover [1, n_max]");
  Tail t = top_decade(a.n, a.a, th.min_tail_points, "a_n");

  Classification c;
  c.criterion_id = "volume_growth";
  bool increasing = true;
  for (std::size_t i = 1; i < t.v.size(); ++i) increasing = increasing && t.v[i] > t.v[i - 1];
  const fit::GrowthLaw law = fit::fit_growth_law(t.r, t.v);
  const bool diverges = increasing && law.unbounded() && law.r2 >= th.r2_min;

  // Ratio log(v2 v 1)/a_n on the tail, fitted as R_inf + c / log n.
  std::vector<double> ratio, inv_log;
  bool positive_a = true;
  for (std::size_t i = 0; i < t.r.size(); ++i) {
    if (!(t.v[i] > 0)) positive_a = false;
    ratio.push_back(std::log(std::max(v2(t.r[i]), 1.0)) / t.v[i]);
    inv_log.push_back(1.0 / std::log(t.r[i]));
  }
  bool all_zero = true, non_increasing = true;
  for (std::size_t i = 0; i < ratio.size(); ++i) {
    all_zero = all_zero && ratio[i] == 0.0;
    if (i && ratio[i] > ratio[i - 1] * (1 + 1e-12) + 1e-15) non_increasing = false;
  }
  json ratio_fit;
  bool ratio_to_zero = false;
  if (!positive_a) {
    ratio_fit = {{"status", "a_n vanishes on the tail"}};
  } else if (all_zero) {
    ratio_to_zero = true;
    ratio_fit = {{"status", "identically zero"}, {"R_inf", 0.0}};
  } else {
    fit::LinearFit lf = fit::linear(inv_log, ratio);
    ratio_to_zero = non_increasing && lf.intercept < th.ratio_limit;
    ratio_fit = {{"status", "fitted"},       {"R_inf", lf.intercept},     {"c", lf.slope},
                 {"r2", lf.r2},              {"non_increasing", non_increasing}, {"last", ratio.back()}};
  }

  c.diagnostics["a_tail_fit"] = law_json(law);
  c.diagnostics["a_increasing"] = increasing;
  c.diagnostics["a_diverges"] = diverges;
  c.diagnostics["ratio_fit"] = ratio_fit;
  c.diagnostics["ratio_to_zero"] = ratio_to_zero;
  c.diagnostics["integrals"] = {{"n_max", n_max}, {"a_n_max", a.a.back()}, {"v_at_1", v(1.0)}};
  c.diagnostics["tail_points"] = t.r.size();
  c.assumptions.push_back(kLimitRule);

  if (diverges && ratio_to_zero) {
    if (irreducible) {
      c.verdict = Verdict::Recurrent;
      c.assumptions.push_back("strict irreducibility asserted" +
                              (irreducible_note.empty() ? std::string() : ": " + irreducible_note));
    } else {
      c.verdict = Verdict::NotTransient;
    }
  } else {
    c.verdict = Verdict::Inconclusive;
  }
  return c;
}

// ---------------------------------------------------------------- growth bounds

Classification test_growth_bounds(const GrowthProfile& v1, const GrowthProfile& v2, const GrowthProfile& v,
                                  const Thresholds& th) {
  if (v.r_max() < 100.0 || v.r_min() > 1.0) fail("DomainExceeded", "profiles must cover [1, 100]");
  Tail t1 = top_decade(v1.radii(), v1.values(), th.min_tail_points, "v1");
  Tail t2 = top_decade(v2.radii(), v2.values(), th.min_tail_points, "v2");
  Tail t = top_decade(v.radii(), v.values(), th.min_tail_points, "v");
  Classification c;
  c.assumptions.push_back(kLimitRule);
  c.assumptions.push_back("growth bounds are required only beyond a data-driven onset radius");

  // (a) v1 <= b r^2 and v2 <= b log r.
  bool case_a = false;
  json a_diag;
  if (t1.v.front() > 0) {
    fit::LinearFit f1 = fit::linear(logs(t1.r), logs(t1.v));
    double b1 = 0;
    for (std::size_t i = 0; i < t1.r.size(); ++i) b1 = std::max(b1, t1.v[i] / (t1.r[i] * t1.r[i]));
    bool v2_log = true;
    double b2 = 0;
    const bool v2_zero = t2.v.back() == 0.0;
    if (!v2_zero) {
      std::vector<double> q(t2.r.size());
      for (std::size_t i = 0; i < t2.r.size(); ++i) {
        q[i] = t2.v[i] / std::log(t2.r[i]);
        b2 = std::max(b2, q[i]);
      }
      v2_log = q.back() <= (1 + th.tail_rel_tol) * q.front();
    }
    case_a = f1.slope <= 2.0 + th.exponent_tol && v2_log;
    a_diag = {{"v1_exponent", f1.slope}, {"b", std::max(b1, b2)}, {"b_v1", b1}, {"b_v2", b2}, {"v2_log_bounded", v2_log}};
  } else {
    a_diag = {{"status", "v1 vanishes on the tail"}};
  }
  // (b) v <= c r^alpha with alpha < 2.
  bool case_b = false;
  json b_diag;
  if (t.v.front() > 0) {
    fit::LinearFit f = fit::linear(logs(t.r), logs(t.v));
    const double alpha = f.slope;
    double cc = 0;
    for (std::size_t i = 0; i < t.r.size(); ++i) cc = std::max(cc, t.v[i] / std::pow(t.r[i], alpha));
    case_b = alpha <= 2.0 - th.alpha_margin;
    b_diag = {{"alpha", alpha}, {"c", cc}, {"r2", f.r2}};
  } else {
    b_diag = {{"status", "v vanishes on the tail"}};
  }
  c.diagnostics["case_a"] = a_diag;
  c.diagnostics["case_b"] = b_diag;
  c.diagnostics["fired"] = json::array();
  if (case_a) c.diagnostics["fired"].push_back("a");
  if (case_b) c.diagnostics["fired"].push_back("b");
  c.diagnostics["onset_radius"] = t.r.front();
  if (case_a || case_b) {
    c.verdict = Verdict::NotTransient;
    c.criterion_id = case_a ? "growth_bounds(a)" : "growth_bounds(b)";
  } else {
    c.verdict = Verdict::Inconclusive;
    c.criterion_id = "growth_bounds";
  }
  return c;
}

// ---------------------------------------------------------------- symmetric transience

Classification test_transience_symmetric(const GrowthProfile& v1, const TailDeclaration& decl, const Thresholds& th) {
  Tail t = top_decade(v1.radii(), v1.values(), th.min_tail_points, "v1");
  Classification c;
  c.criterion_id = "transience_symmetric";
  double C = 0, gamma = 0;
  bool validated = false;
  std::string source;
  double max_dev = 0;
  if (decl.law) {
    source = "declared";
    C = decl.law->C;
    gamma = decl.law->gamma;
    for (std::size_t i = 0; i < t.r.size(); ++i)
      max_dev = std::max(max_dev, std::fabs(t.v[i] / (C * std::pow(t.r[i], gamma)) - 1.0));
    if (max_dev > th.tail_rel_tol) {
      std::ostringstream os;
      os << "declared law " << C << " r^" << gamma << " deviates by " << max_dev * 100 << "% from the profile tail";
      fail("TailMismatch", os.str());
    }
    validated = true;
  } else if (decl.lower_bound) {
    source = "comparison";
    C = decl.lower_bound->C;
    gamma = decl.lower_bound->gamma;
    for (std::size_t i = 0; i < v1.radii().size(); ++i) {
      const double r = v1.radii()[i];
      if (r < decl.lower_bound->r0) continue;
      if (v1.values()[i] < C * std::pow(r, gamma) * (1 - 1e-9)) {
        std::ostringstream os;
        os << "comparison bound v1 >= " << C << " r^" << gamma << " fails at r=" << r;
        fail("TailMismatch", os.str());
      }
    }
    validated = true;
  } else {
    source = "fitted";
    if (t.v.front() > 0) {
      fit::LinearFit f = fit::linear(logs(t.r), logs(t.v));
      gamma = f.slope;
      C = std::exp(f.intercept);
      for (std::size_t i = 0; i < t.r.size(); ++i)
        max_dev = std::max(max_dev, std::fabs(t.v[i] / (C * std::pow(t.r[i], gamma)) - 1.0));
      validated = max_dev <= th.tail_rel_tol;
    }
  }
  const double margin = source == "fitted" ? th.gamma_margin : 0.0;
  const bool converges = validated && gamma > 2.0 + margin;
  // int_1^R r/v1 + int_R^inf r/(C r^gamma).
  double integral = INFINITY;
  if (converges && v1.covers(1.0, v1.r_max())) {
    quad::Options qo;
    qo.rel_tol = 1e-9;
    const double R = v1.r_max();
    integral = quad::integrate([&](double r) { return r / v1(r); }, 1.0, R, qo, v1.radii()).value +
               std::pow(R, 2.0 - gamma) / (C * (gamma - 2.0));
  }
  c.diagnostics["tail_law"] = {{"source", source}, {"C", C}, {"gamma", gamma}, {"max_rel_deviation", max_dev},
                               {"validated", validated}};
  c.diagnostics["integrals"] = {{"int_r_over_v1", converges ? json(integral) : json("divergent or unresolved")}};
  c.diagnostics["converges"] = converges;
  c.assumptions.push_back("heat-kernel bounds and weight-class hypotheses recorded, not verified");
  if (converges && decl.heat_kernel_bounds) {
    c.verdict = Verdict::Transient;
  } else {
    c.verdict = Verdict::Inconclusive;
    if (converges) c.diagnostics["note"] = "integral converges but heat-kernel bounds are not asserted for this model";
  }
  return c;
}

// ---------------------------------------------------------------- chi sequence

ChiSequence::ChiSequence(GrowthProfile v, GrowthProfile v2, std::vector<ChiEntry> entries)
    : v_(std::move(v)), v2_(std::move(v2)), entries_(std::move(entries)) {}

const ChiEntry& ChiSequence::at(double n) const {
  for (const auto& e : entries_)
    if (std::fabs(e.n - n) <= 1e-12 * n) return e;
  fail("InvalidArgument", "n=" + std::to_string(n) + " is not part of the sequence");
}

ChiEntry& ChiSequence::at(double n) { return const_cast<ChiEntry&>(static_cast<const ChiSequence&>(*this).at(n)); }

double ChiSequence::psi(double n, double r) const {
  const ChiEntry& e = at(n);
  if (r <= 1.0) return 1.0;
  if (r >= n) return 0.0;
  quad::Options qo;
  qo.rel_tol = 1e-10;
  const double I = quad::integrate([&](double t) { return t / v_(t); }, 1.0, r, qo, v_.radii()).value;
  return std::clamp(1.0 - I / e.a_n, 0.0, 1.0);
}

double ChiSequence::dpsi(double n, double r) const {
  const ChiEntry& e = at(n);
  if (r <= 1.0 || r >= n) return 0.0;
  return -r / (e.a_n * v_(r));
}

ChiSequence build_chi_sequence(const GrowthProfile& v, const GrowthProfile& v2, const volume::ASequence& a,
                               const std::vector<double>& n_list) {
  std::vector<ChiEntry> entries;
  for (double n : n_list) {
    std::size_t k = a.n.size();
    for (std::size_t i = 0; i < a.n.size(); ++i)
      if (std::fabs(a.n[i] - n) <= 1e-12 * n) k = i;
    double a_n;
    if (k < a.n.size()) {
      a_n = a.a[k];
    } else {
      a_n = volume::compute_a(v, {1.0, n}).a.back();
    }
    if (!(a_n > 0)) fail("ZeroA", "a_n = 0 at n=" + std::to_string(n));
    ChiEntry e;
    e.n = n;
    e.a_n = a_n;
    e.b_n = 2.0 / a_n + 1.0 / (a_n * a_n * v(1.0)) + std::log(std::max(v2(n), 1.0)) / a_n;
    entries.push_back(e);
  }
  return ChiSequence(v, v2, std::move(entries));
}

EnergyResult energy_of_chi(const model::Model& m, ChiSequence& chi, double n, double tol, const volume::Options& opt) {
  ChiEntry& e = chi.at(n);
  const GrowthProfile& v = chi.v();
  const int d = m.dim();
  EnergyResult res;
  res.n = n;
  res.b_n = e.b_n;
  // Shells between consecutive profile nodes keep the interpolant smooth per piece.
  std::vector<double> cuts{1.0};
  for (double r : v.radii())
    if (r > 1.0 && r < n) cuts.push_back(r);
  cuts.push_back(n);
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    res.symmetric += volume::shell_integral(
                         m, cuts[k], cuts[k + 1],
                         [&](std::span<const double> x) {
                           const double r = m.rho(x);
                           const double s = r / (e.a_n * v(std::clamp(r, 1.0, n)));
                           double g[model::kMaxDim];
                           m.grad_rho(x, g);
                           for (int i = 0; i < d; ++i) g[i] *= s;
                           return m.a_form(x, g) * m.phi(x);
                         },
                         opt)
                         .value;
    res.drift += volume::shell_integral(
                     m, cuts[k], cuts[k + 1],
                     [&](std::span<const double> x) {
                       const double r = m.rho(x);
                       const double s = r / (e.a_n * v(std::clamp(r, 1.0, n)));
                       double g[model::kMaxDim];
                       m.grad_rho(x, g);
                       for (int i = 0; i < d; ++i) g[i] *= s;
                       return std::fabs(m.flux_dot(x, g));
                     },
                     opt)
                     .value;
  }
  res.e_n = res.symmetric + res.drift;
  res.within_bound = res.e_n <= res.b_n * (1 + tol);
  e.e_n = res.e_n;
  if (!res.within_bound) {
    std::ostringstream os;
    os << "measured energy " << res.e_n << " exceeds certified bound " << res.b_n << " at n=" << n;
    fail("EnergyBoundViolation", os.str());
  }
  return res;
}

// ---------------------------------------------------------------- Lipschitz cutoffs

namespace {
double edge_fn(double t) { return t > 0 ? std::exp(-1.0 / t) : 0.0; }
double edge_fn_d(double t) { return t > 0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }
}  // namespace

double smooth_step(double t) {
  if (t <= 0) return 0.0;
  if (t >= 1) return 1.0;
  const double a = edge_fn(t), b = edge_fn(1 - t);
  return a / (a + b);
}

double smooth_step_slope(double t) {
  if (t <= 0 || t >= 1) return 0.0;
  const double a = edge_fn(t), b = edge_fn(1 - t);
  const double da = edge_fn_d(t), db = -edge_fn_d(1 - t);
  return (da * b - a * db) / ((a + b) * (a + b));
}

CutoffWitness lipschitz_cutoff_energy(const model::Model& m, double n, const volume::Options& opt) {
  if (!(n > 0)) fail("InvalidArgument", "n must be positive");
  const int d = m.dim();
  CutoffWitness w;
  w.n = n;
  for (int i = 1; i < 20000; ++i) w.max_slope = std::max(w.max_slope, std::fabs(smooth_step_slope(i / 20000.0)));
  w.max_slope /= n;
  auto grad_chi = [&](std::span<const double> x, double* g) {
    const double r = m.rho(x);
    const double s = -smooth_step_slope((r - n) / n) / n;
    m.grad_rho(x, g);
    for (int i = 0; i < d; ++i) g[i] *= s;
    return 1.0 - smooth_step((r - n) / n);
  };
  w.symmetric = volume::shell_integral(
                    m, n, 2 * n,
                    [&](std::span<const double> x) {
                      double g[model::kMaxDim];
                      grad_chi(x, g);
                      return m.a_form(x, g) * m.phi(x);
                    },
                    opt)
                    .value;
  volume::Options full = opt;
  full.method = volume::Method::Full;
  quad::Options dq = full.quad;
  dq.abs_tol = std::max(dq.abs_tol, 1e-12 * std::max(1.0, w.symmetric));
  full.quad = dq;
  w.drift = volume::shell_integral(
                m, n, 2 * n,
                [&](std::span<const double> x) {
                  double g[model::kMaxDim];
                  const double c = grad_chi(x, g);
                  return m.flux_dot(x, g) * c;
                },
                full, false)
                .value;
  w.energy = w.symmetric - w.drift;
  return w;
}

// ---------------------------------------------------------------- merge

Classification merge(const std::vector<Classification>& parts) {
  auto any = [&](Verdict v) {
    return std::any_of(parts.begin(), parts.end(), [&](const Classification& c) { return c.verdict == v; });
  };
  if (any(Verdict::Transient) && (any(Verdict::NotTransient) || any(Verdict::Recurrent)))
    fail("InconsistentVerdicts", "Transient co-fired with NotTransient/Recurrent; the model is misconfigured");
  if (any(Verdict::NotRecurrent) && any(Verdict::Recurrent))
    fail("InconsistentVerdicts", "NotRecurrent co-fired with Recurrent; the model is misconfigured");
  static const Verdict order[] = {Verdict::Transient, Verdict::Recurrent, Verdict::NotRecurrent, Verdict::NotTransient,
                                  Verdict::Inconclusive};
  Classification out;
  for (Verdict v : order) {
    auto it = std::find_if(parts.begin(), parts.end(), [&](const Classification& c) { return c.verdict == v; });
    if (it != parts.end()) {
      out.verdict = v;
      out.criterion_id = it->criterion_id;
      break;
    }
  }
  json tests = json::array();
  for (const auto& p : parts) {
    tests.push_back(to_json(p));
    for (const auto& a : p.assumptions)
      if (std::find(out.assumptions.begin(), out.assumptions.end(), a) == out.assumptions.end())
        out.assumptions.push_back(a);
  }
  out.diagnostics["tests"] = tests;
  return out;
}

}  // namespace rtd::criteria
