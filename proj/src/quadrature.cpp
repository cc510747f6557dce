#include "rtd/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <vector>

#include "rtd/errors.hpp"

namespace rtd::quad {

namespace {

// Kronrod 15-point abscissae (descending) with Gauss 7-point weights on odd slots.
constexpr double kXgk[8] = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                            0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                            0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                            0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
constexpr double kWgk[8] = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                            0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                            0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                            0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
constexpr double kWg[4] = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                           0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Piece {
  double a, b, value, error, absval;
  std::size_t order;
};

Piece gk15(const Integrand& f, double a, double b, std::size_t order) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  if (!std::isfinite(fc)) {
    std::ostringstream os;
    os << "integrand is " << fc << " at x = " << c;
    throw Error("volume", "NonFinite", os.str());
  }
  double resk = fc * kWgk[7];
  double resg = fc * kWg[3];
  double resabs = std::fabs(resk);
  double fv1[7], fv2[7];
  for (int j = 0; j < 7; ++j) {
    const double dx = h * kXgk[j];
    const double f1 = f(c - dx);
    const double f2 = f(c + dx);
    if (!std::isfinite(f1) || !std::isfinite(f2)) {
      std::ostringstream os;
      os << "integrand is non-finite near x = " << (std::isfinite(f1) ? c + dx : c - dx);
      throw Error("volume", "NonFinite", os.str());
    }
    fv1[j] = f1;
    fv2[j] = f2;
    resk += kWgk[j] * (f1 + f2);
    resabs += kWgk[j] * (std::fabs(f1) + std::fabs(f2));
    if (j % 2 == 1) resg += kWg[j / 2] * (f1 + f2);
  }
  const double mean = resk * 0.5;
  double resasc = kWgk[7] * std::fabs(fc - mean);
  for (int j = 0; j < 7; ++j) resasc += kWgk[j] * (std::fabs(fv1[j] - mean) + std::fabs(fv2[j] - mean));
  const double ah = std::fabs(h);
  resasc *= ah;
  resabs *= ah;
  double err = std::fabs((resk - resg) * h);
  if (resasc != 0.0 && err != 0.0) err = resasc * std::min(1.0, std::pow(200.0 * err / resasc, 1.5));
  const double eps = std::numeric_limits<double>::epsilon();
  if (resabs > std::numeric_limits<double>::min() / (50 * eps)) err = std::max(50 * eps * resabs, err);
  return {a, b, resk * h, err, resabs, order};
}

}  // namespace

double pairwise_sum(std::span<const double> v) {
  if (v.empty()) return 0.0;
  if (v.size() <= 4) {
    double s = 0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t m = v.size() / 2;
  return pairwise_sum(v.subspan(0, m)) + pairwise_sum(v.subspan(m));
}

Result integrate(const Integrand& f, double a, double b, const Options& opt, std::span<const double> breakpoints) {
  if (a == b) return {};
  if (a > b) {
    Result r = integrate(f, b, a, opt, breakpoints);
    r.value = -r.value;
    return r;
  }
  if (!std::isfinite(a) || !std::isfinite(b)) throw Error("volume", "QuadratureFailure", "infinite limits are not supported");

  std::vector<double> edges{a};
  for (double p : breakpoints)
    if (p > a && p < b) edges.push_back(p);
  edges.push_back(b);
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

  auto cmp = [](const Piece& x, const Piece& y) {
    if (x.error != y.error) return x.error < y.error;
    return x.order > y.order;
  };
  std::priority_queue<Piece, std::vector<Piece>, decltype(cmp)> heap(cmp);
  std::vector<Piece> done;
  std::size_t evals = 0;
  std::size_t order = 0;
  double total = 0.0, total_err = 0.0, total_abs = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    Piece p = gk15(f, edges[i], edges[i + 1], order++);
    evals += 15;
    total += p.value;
    total_err += p.error;
    total_abs += p.absval;
    heap.push(p);
  }

  const double eps = std::numeric_limits<double>::epsilon();
  // The last term stops cancelling integrands at the roundoff floor of int |f|.
  auto tolerance = [&] {
    return std::max({opt.abs_tol, opt.rel_tol * std::fabs(total), 100 * eps * total_abs});
  };
  while (!heap.empty() && total_err > tolerance()) {
    if (evals + 30 > opt.max_evals) {
      std::ostringstream os;
      os << "evaluation budget " << opt.max_evals << " exhausted on [" << a << ", " << b << "], error estimate "
         << total_err << " vs tolerance " << tolerance();
      throw Error("volume", "QuadratureFailure", os.str());
    }
    Piece p = heap.top();
    heap.pop();
    const double mid = 0.5 * (p.a + p.b);
    if (!(mid > p.a && mid < p.b) || (p.b - p.a) < 8 * eps * std::max(std::fabs(p.a), std::fabs(p.b))) {
      // Interval at machine resolution: its error cannot shrink further.
      done.push_back(p);
      continue;
    }
    Piece l = gk15(f, p.a, mid, order++);
    Piece r = gk15(f, mid, p.b, order++);
    evals += 30;
    total += (l.value + r.value) - p.value;
    total_err += (l.error + r.error) - p.error;
    total_abs += (l.absval + r.absval) - p.absval;
    heap.push(l);
    heap.push(r);
  }

  while (!heap.empty()) {
    done.push_back(heap.top());
    heap.pop();
  }
  std::sort(done.begin(), done.end(), [](const Piece& x, const Piece& y) { return x.a < y.a; });
  std::vector<double> vals, errs;
  vals.reserve(done.size());
  errs.reserve(done.size());
  for (const auto& p : done) {
    vals.push_back(p.value);
    errs.push_back(p.error);
  }
  Result res;
  res.value = pairwise_sum(vals);
  res.error = pairwise_sum(errs);
  res.evals = evals;
  if (!std::isfinite(res.value)) throw Error("volume", "NonFinite", "integral overflowed");
  if (res.error > tolerance() && res.error > 1e3 * eps * total_abs + opt.abs_tol) {
    // Only reachable if every remaining piece hit machine resolution.
    std::ostringstream os;
    os << "non-integrable behaviour on [" << a << ", " << b << "]: error " << res.error;
    throw Error("volume", "QuadratureFailure", os.str());
  }
  return res;
}

}  // namespace rtd::quad

namespace rtd::quad {

Result integrate_spherical(int d, std::span<const double> center, const PointFn& f, const RayLimits& limits,
                           const Options& opt, std::span<const double> radial_breaks) {
  if (d < 1 || d > 3) throw Error("volume", "UnsupportedDimension", "spherical quadrature supports d <= 3");
  std::size_t used = 0;
  const std::size_t budget = opt.max_evals;
  Options inner = opt;
  inner.rel_tol = opt.rel_tol * 0.1;
  inner.abs_tol = opt.abs_tol * 0.1;

  auto charge = [&](std::size_t n) {
    used += n;
    if (used > budget) throw Error("volume", "QuadratureFailure", "nested evaluation budget exhausted");
  };
  auto ray = [&](const double* theta) {
    std::pair<double, double> lim = limits(std::span<const double>(theta, static_cast<std::size_t>(d)));
    if (!(lim.second > lim.first)) return 0.0;
    double x[3];
    Options o = inner;
    o.max_evals = budget - std::min(used, budget);
    Result r = integrate(
        [&](double s) {
          for (int i = 0; i < d; ++i) x[i] = center[static_cast<std::size_t>(i)] + s * theta[i];
          const double v = f(std::span<const double>(x, static_cast<std::size_t>(d)));
          return d == 1 ? v : v * std::pow(s, d - 1);
        },
        lim.first, lim.second, o, radial_breaks);
    charge(r.evals);
    return r.value;
  };

  Result out;
  if (d == 1) {
    const double plus[1] = {1.0}, minus[1] = {-1.0};
    out.value = ray(plus) + ray(minus);
  } else if (d == 2) {
    Options o = opt;
    Result r = integrate(
        [&](double t) {
          const double th[2] = {std::cos(t), std::sin(t)};
          return ray(th);
        },
        0.0, 2 * M_PI, o);
    out = r;
  } else {
    Options o = opt;
    Result r = integrate(
        [&](double polar) {
          Options oi = inner;
          Result az = integrate(
              [&](double azim) {
                const double th[3] = {std::sin(polar) * std::cos(azim), std::sin(polar) * std::sin(azim),
                                      std::cos(polar)};
                return ray(th);
              },
              0.0, 2 * M_PI, oi);
          charge(az.evals);
          return az.value * std::sin(polar);
        },
        0.0, M_PI, o);
    out = r;
  }
  out.evals = used;
  return out;
}

}  // namespace rtd::quad
