#include "rtd/fit.hpp"

#include <cmath>
#include <vector>

#include "rtd/errors.hpp"

namespace rtd::fit {

LinearFit linear(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw Error("criteria", "InsufficientTail", "linear fit needs at least two points");
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    f.sse += r * r;
  }
  f.r2 = syy > 0 ? 1.0 - f.sse / syy : 1.0;
  return f;
}

std::string to_string(LawKind k) {
  switch (k) {
    case LawKind::Log: return "log";
    case LawKind::Power: return "power";
    case LawKind::Bounded: return "bounded";
  }
  return "?";
}

double GrowthLaw::operator()(double n) const {
  switch (kind) {
    case LawKind::Log: return c0 + c1 * std::log(n);
    case LawKind::Power: return c0 + c1 * std::pow(n, p);
    case LawKind::Bounded: return c0 - c1 * std::pow(n, -p);
  }
  return 0.0;
}

bool GrowthLaw::unbounded() const { return kind != LawKind::Bounded && c1 > 0; }

namespace {

GrowthLaw with_basis(LawKind kind, double p, std::span<const double> n, std::span<const double> a) {
  std::vector<double> z(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    switch (kind) {
      case LawKind::Log: z[i] = std::log(n[i]); break;
      case LawKind::Power: z[i] = std::pow(n[i], p); break;
      case LawKind::Bounded: z[i] = -std::pow(n[i], -p); break;
    }
  }
  LinearFit lf = linear(z, a);
  return {kind, lf.intercept, lf.slope, p, lf.r2, lf.sse};
}

}  // namespace

GrowthLaw fit_law(LawKind kind, std::span<const double> n, std::span<const double> a) {
  if (kind == LawKind::Log) return with_basis(kind, 0.0, n, a);
  constexpr double lo = 0.05, hi = 4.0;
  constexpr int grid = 160;
  double best_p = lo;
  double best = INFINITY;
  for (int i = 0; i <= grid; ++i) {
    const double p = lo * std::pow(hi / lo, static_cast<double>(i) / grid);
    const double s = with_basis(kind, p, n, a).sse;
    if (s < best) {
      best = s;
      best_p = p;
    }
  }
  // Golden-section refinement in log p around the best grid point.
  const double step = std::log(hi / lo) / grid;
  double x0 = std::max(std::log(lo), std::log(best_p) - step);
  double x1 = std::min(std::log(hi), std::log(best_p) + step);
  const double g = (std::sqrt(5.0) - 1) / 2;
  double c = x1 - g * (x1 - x0), d = x0 + g * (x1 - x0);
  double fc = with_basis(kind, std::exp(c), n, a).sse, fd = with_basis(kind, std::exp(d), n, a).sse;
  for (int it = 0; it < 80; ++it) {
    if (fc < fd) {
      x1 = d;
      d = c;
      fd = fc;
      c = x1 - g * (x1 - x0);
      fc = with_basis(kind, std::exp(c), n, a).sse;
    } else {
      x0 = c;
      c = d;
      fc = fd;
      d = x0 + g * (x1 - x0);
      fd = with_basis(kind, std::exp(d), n, a).sse;
    }
  }
  GrowthLaw refined = with_basis(kind, std::exp(0.5 * (x0 + x1)), n, a);
  GrowthLaw coarse = with_basis(kind, best_p, n, a);
  return refined.sse <= coarse.sse ? refined : coarse;
}

GrowthLaw fit_growth_law(std::span<const double> n, std::span<const double> a) {
  GrowthLaw best = fit_law(LawKind::Log, n, a);
  for (LawKind k : {LawKind::Power, LawKind::Bounded}) {
    GrowthLaw g = fit_law(k, n, a);
    if (g.sse < best.sse) best = g;
  }
  return best;
}

}  // namespace rtd::fit
