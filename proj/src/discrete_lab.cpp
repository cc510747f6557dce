#include "rtd/discrete_lab.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/SparseLU>

#include "rtd/errors.hpp"
#include "rtd/matrix_exp.hpp"

namespace rtd::lab {

using nlohmann::json;
using Triplet = Eigen::Triplet<double>;

namespace {

[[noreturn]] void fail(const std::string& kind, const std::string& msg) { throw Error("lab", kind, msg); }

double max_abs(const Vec& v) { return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0; }

double max_abs(const SpMat& A) {
  double m = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) m = std::max(m, std::fabs(it.value()));
  return m;
}

std::vector<std::vector<int>> out_edges(const SpMat& L) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(L.rows()));
  for (int k = 0; k < L.outerSize(); ++k)
    for (SpMat::InnerIterator it(L, k); it; ++it)
      if (it.row() != it.col() && it.value() > 0) out[static_cast<std::size_t>(it.row())].push_back(static_cast<int>(it.col()));
  return out;
}

// Kosaraju with explicit stacks; returns the class index of every state.
std::vector<int> strong_components(const std::vector<std::vector<int>>& out, int& count) {
  const int n = static_cast<int>(out.size());
  std::vector<std::vector<int>> in(out.size());
  for (int i = 0; i < n; ++i)
    for (int j : out[static_cast<std::size_t>(i)]) in[static_cast<std::size_t>(j)].push_back(i);
  std::vector<int> order;
  order.reserve(out.size());
  std::vector<char> seen(out.size(), 0);
  for (int s = 0; s < n; ++s) {
    if (seen[static_cast<std::size_t>(s)]) continue;
    std::vector<std::pair<int, std::size_t>> st{{s, 0}};
    seen[static_cast<std::size_t>(s)] = 1;
    while (!st.empty()) {
      auto& [v, pos] = st.back();
      const auto& adj = out[static_cast<std::size_t>(v)];
      if (pos < adj.size()) {
        const int w = adj[pos++];
        if (!seen[static_cast<std::size_t>(w)]) {
          seen[static_cast<std::size_t>(w)] = 1;
          st.push_back({w, 0});
        }
      } else {
        order.push_back(v);
        st.pop_back();
      }
    }
  }
  std::vector<int> comp(out.size(), -1);
  count = 0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (comp[static_cast<std::size_t>(*it)] >= 0) continue;
    std::vector<int> st{*it};
    comp[static_cast<std::size_t>(*it)] = count;
    while (!st.empty()) {
      const int v = st.back();
      st.pop_back();
      for (int w : in[static_cast<std::size_t>(v)])
        if (comp[static_cast<std::size_t>(w)] < 0) {
          comp[static_cast<std::size_t>(w)] = count;
          st.push_back(w);
        }
    }
    ++count;
  }
  return comp;
}

// States from which `targets` can be reached (targets included).
std::vector<char> ancestors(const std::vector<std::vector<int>>& out, const std::vector<char>& targets) {
  const std::size_t n = out.size();
  std::vector<std::vector<int>> in(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int j : out[i]) in[static_cast<std::size_t>(j)].push_back(static_cast<int>(i));
  std::vector<char> mark = targets;
  std::vector<int> st;
  for (std::size_t i = 0; i < n; ++i)
    if (mark[i]) st.push_back(static_cast<int>(i));
  while (!st.empty()) {
    const int v = st.back();
    st.pop_back();
    for (int w : in[static_cast<std::size_t>(v)])
      if (!mark[static_cast<std::size_t>(w)]) {
        mark[static_cast<std::size_t>(w)] = 1;
        st.push_back(w);
      }
  }
  return mark;
}

Vec row_sums(const SpMat& L) { return L * Vec::Ones(L.cols()); }

SpMat diag(const Vec& v) {
  SpMat D(v.size(), v.size());
  std::vector<Triplet> t;
  for (Eigen::Index i = 0; i < v.size(); ++i) t.emplace_back(static_cast<int>(i), static_cast<int>(i), v[i]);
  D.setFromTriplets(t.begin(), t.end());
  return D;
}

SpMat submatrix(const SpMat& A, const std::vector<int>& keep) {
  std::vector<int> pos(static_cast<std::size_t>(A.rows()), -1);
  for (std::size_t k = 0; k < keep.size(); ++k) pos[static_cast<std::size_t>(keep[k])] = static_cast<int>(k);
  std::vector<Triplet> t;
  for (int c = 0; c < A.outerSize(); ++c)
    for (SpMat::InnerIterator it(A, c); it; ++it) {
      const int r = pos[static_cast<std::size_t>(it.row())], q = pos[static_cast<std::size_t>(it.col())];
      if (r >= 0 && q >= 0) t.emplace_back(r, q, it.value());
    }
  SpMat S(static_cast<Eigen::Index>(keep.size()), static_cast<Eigen::Index>(keep.size()));
  S.setFromTriplets(t.begin(), t.end());
  return S;
}

Vec random_vector(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  std::uniform_real_distribution<double> U(lo, hi);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = U(rng);
  return v;
}

double harmonic(double a, double b) { return (a > 0 && b > 0) ? 2 * a * b / (a + b) : 0.0; }

}  // namespace

std::string to_string(Boundary b) {
  switch (b) {
    case Boundary::Reflecting: return "reflecting";
    case Boundary::Absorbing: return "absorbing";
    case Boundary::Periodic: return "periodic";
  }
  return "?";
}

Boundary boundary_from_string(const std::string& s) {
  if (s == "reflecting") return Boundary::Reflecting;
  if (s == "absorbing") return Boundary::Absorbing;
  if (s == "periodic") return Boundary::Periodic;
  fail("InvalidArgument", "unknown boundary '" + s + "'");
}

model::Point Grid::center(int idx) const {
  model::Point p{0.0, 0.0, 0.0};
  const int i = idx % n[0];
  p[0] = lo[0] + (i + 0.5) * spacing(0);
  if (dim == 2) {
    const int j = idx / n[0];
    p[1] = lo[1] + (j + 0.5) * spacing(1);
  }
  return p;
}

Grid uniform_grid(int dim, int cells, double extent) {
  if (dim < 1 || dim > 2) fail("UnsupportedDimension", "lattices exist for d = 1, 2");
  if (cells < 1 || !(extent > 0)) fail("InvalidArgument", "need cells >= 1 and extent > 0");
  const long total = dim == 1 ? cells : static_cast<long>(cells) * cells;
  if ((dim == 1 && total > 100000) || (dim == 2 && total > 10000))
    fail("InvalidArgument", "grid exceeds 1e5 (d = 1) / 1e4 (d = 2) states");
  Grid g;
  g.dim = dim;
  for (int k = 0; k < dim; ++k) {
    g.n[k] = cells;
    g.lo[k] = -extent;
    g.hi[k] = extent;
  }
  return g;
}

SpMat GeneratorMatrix::adjoint() const {
  const Vec inv = mu.cwiseInverse();
  SpMat A = diag(inv) * SpMat(L.transpose()) * diag(mu);
  A.makeCompressed();
  return A;
}

// ---------------------------------------------------------------- assembly

GeneratorMatrix assemble(const GeneratorParts& p, Boundary boundary, bool project) {
  const int n = static_cast<int>(p.mu.size());
  if (n == 0) fail("InvalidArgument", "empty generator");
  for (int i = 0; i < n; ++i)
    if (!(p.mu[i] > 0) || !std::isfinite(p.mu[i]))
      fail("NonPositiveWeight", "cell mass mu_" + std::to_string(i) + " = " + std::to_string(p.mu[i]));
  const Vec kappa = p.killing.size() ? p.killing : Vec::Zero(n);
  Vec Kg = p.ghost_flux.size() ? p.ghost_flux : Vec::Zero(n);
  std::vector<Edge> K = p.flux;

  GeneratorMatrix G;
  G.mu = p.mu;
  G.boundary = boundary;

  // Divergence-free projection of the fluxes.
  Vec div = Kg;
  double kscale = max_abs(Kg);
  for (const auto& e : K) {
    div[e.i] += e.value;
    div[e.j] -= e.value;
    kscale = std::max(kscale, std::fabs(e.value));
  }
  if (project && kscale > 0 && max_abs(div) > 1e-14 * kscale) {
    bool grounded = false;
    for (int i = 0; i < n; ++i) grounded = grounded || kappa[i] > 0;
    // Neumann graph Laplacian: pin p_0 = 0; the dropped equation follows from sum(div) = 0.
    const bool pin = !grounded;
    std::vector<Triplet> t;
    Vec deg = Vec::Zero(n);
    for (const auto& e : K) {
      deg[e.i] += 1;
      deg[e.j] += 1;
      if (!(pin && e.i == 0)) t.emplace_back(e.i, e.j, -1.0);
      if (!(pin && e.j == 0)) t.emplace_back(e.j, e.i, -1.0);
    }
    for (int i = 0; i < n; ++i)
      if (kappa[i] > 0) deg[i] += 1;
    for (int i = 0; i < n; ++i) t.emplace_back(i, i, (pin && i == 0) ? 1.0 : deg[i]);
    SpMat Lap(n, n);
    Lap.setFromTriplets(t.begin(), t.end());
    Vec rhs = div;
    if (pin) rhs[0] = 0.0;
    Lap.makeCompressed();
    Eigen::SparseLU<SpMat> lu;
    lu.compute(Lap);
    if (lu.info() != Eigen::Success) fail("SingularSystem", "flux projection: graph Laplacian is singular");
    const Vec pot = lu.solve(rhs);
    double corr = 0.0;
    for (auto& e : K) {
      const double c = pot[e.i] - pot[e.j];
      e.value -= c;
      corr = std::max(corr, std::fabs(c));
    }
    for (int i = 0; i < n; ++i)
      if (kappa[i] > 0) {
        Kg[i] -= pot[i];
        corr = std::max(corr, std::fabs(pot[i]));
      }
    G.projection_size = corr / kscale;
    double rest = 0.0;
    for (const auto& e : K) rest = std::max(rest, std::fabs(e.value));
    for (int i = 0; i < n; ++i) rest = std::max(rest, std::fabs(Kg[i]));
    if (rest <= 1e-12 * kscale)
      G.warnings.push_back("drift removed: the lattice carries no nonzero divergence-free flow for this boundary");
  }
  if (!project) {
    for (int i = 0; i < n; ++i)
      if (std::fabs(div[i]) > 1e-12 * std::max(kscale, 1e-300))
        fail("InvalidArgument", "fluxes are not divergence-free and projection is disabled");
  }
  if (kappa.minCoeff() < 0) fail("InvalidArgument", "negative killing rate");
  if (boundary != Boundary::Absorbing && kappa.maxCoeff() > 0)
    fail("InvalidArgument", "killing rates require an absorbing boundary");

  // Dirichlet structure: every flux bounded by its conductance.
  std::map<std::pair<int, int>, double> cond;
  for (const auto& e : p.conductance) {
    if (!(e.value > 0) || !std::isfinite(e.value))
      fail("EllipticityLoss", "face weight " + std::to_string(e.value) + " between cells " + std::to_string(e.i) +
                                  " and " + std::to_string(e.j));
    cond[{std::min(e.i, e.j), std::max(e.i, e.j)}] += e.value;
  }
  for (const auto& e : K) {
    const auto key = std::make_pair(std::min(e.i, e.j), std::max(e.i, e.j));
    const double c = cond.count(key) ? cond.at(key) : 0.0;
    if (std::fabs(e.value) > c * (1 + 1e-12))
      fail("EllipticityLoss", "drift flux " + std::to_string(std::fabs(e.value)) + " exceeds conductance " +
                                  std::to_string(c) + " between cells " + std::to_string(e.i) + " and " +
                                  std::to_string(e.j) + "; refine the grid or shrink the box");
  }
  for (int i = 0; i < n; ++i)
    if (std::fabs(Kg[i]) > kappa[i] * (1 + 1e-12))
      fail("EllipticityLoss", "boundary flux " + std::to_string(std::fabs(Kg[i])) + " exceeds killing rate " +
                                  std::to_string(kappa[i]) + " at cell " + std::to_string(i));

  std::vector<Triplet> t0, tn;
  Vec csum = kappa;
  for (const auto& [key, c] : cond) {
    t0.emplace_back(key.first, key.second, c / p.mu[key.first]);
    t0.emplace_back(key.second, key.first, c / p.mu[key.second]);
    csum[key.first] += c;
    csum[key.second] += c;
  }
  for (int i = 0; i < n; ++i) t0.emplace_back(i, i, -csum[i] / p.mu[i]);
  for (const auto& e : K) {
    if (e.value == 0.0) continue;
    tn.emplace_back(e.i, e.j, e.value / p.mu[e.i]);
    tn.emplace_back(e.j, e.i, -e.value / p.mu[e.j]);
  }
  G.L0.resize(n, n);
  G.L0.setFromTriplets(t0.begin(), t0.end());
  G.N.resize(n, n);
  G.N.setFromTriplets(tn.begin(), tn.end());
  G.L = G.L0 + G.N;
  G.L0.makeCompressed();
  G.N.makeCompressed();
  G.L.makeCompressed();
  return G;
}

GeneratorMatrix build_generator(const model::Model& m, const Grid& grid, Boundary boundary) {
  const int d = grid.dim;
  if (m.dim() != d) fail("InvalidArgument", "grid and model dimensions differ");
  const int n = grid.cells();
  GeneratorParts parts;
  parts.mu.resize(n);
  parts.killing = Vec::Zero(n);
  parts.ghost_flux = Vec::Zero(n);
  const double h[2] = {grid.spacing(0), d == 2 ? grid.spacing(1) : 1.0};
  const double vol = d == 2 ? h[0] * h[1] : h[0];

  auto phi_at = [&](const model::Point& x) { return m.phi(std::span<const double>(x.data(), static_cast<std::size_t>(d))); };
  auto weight = [&](const model::Point& x, int k) {
    const std::span<const double> s(x.data(), static_cast<std::size_t>(d));
    return m.phi(s) * m.a(k, k, s);
  };
  auto drift_flux = [&](const model::Point& x, int k) {
    const std::span<const double> s(x.data(), static_cast<std::size_t>(d));
    return m.flux(k, s);
  };

  for (int idx = 0; idx < n; ++idx) {
    const double ph = phi_at(grid.center(idx));
    if (!(ph > 0) || !std::isfinite(ph))
      fail("NonPositiveWeight", "phi = " + std::to_string(ph) + " at cell " + std::to_string(idx));
    parts.mu[idx] = ph * vol;
  }
  auto index = [&](int i, int j) { return i + grid.n[0] * j; };
  const int ny = d == 2 ? grid.n[1] : 1;
  for (int k = 0; k < d; ++k) {
    const double area = d == 2 ? h[1 - k] : 1.0;
    const int len = grid.n[k];
    for (int j = 0; j < (k == 0 ? ny : grid.n[0]); ++j) {
      for (int i = 0; i < len; ++i) {
        const int a = k == 0 ? index(i, j) : index(j, i);
        const model::Point ca = grid.center(a);
        const double wa = weight(ca, k);
        const bool last = i == len - 1;
        if (!last || boundary == Boundary::Periodic) {
          if (last && len < 3) continue;
          const int b = k == 0 ? index(last ? 0 : i + 1, j) : index(j, last ? 0 : i + 1);
          const double w = harmonic(wa, weight(grid.center(b), k));
          model::Point face = ca;
          face[static_cast<std::size_t>(k)] += 0.5 * h[k];
          const double F = drift_flux(face, k) * area;
          parts.conductance.push_back({a, b, w * area / h[k]});
          if (F != 0.0) parts.flux.push_back({a, b, 0.5 * F});
        }
        if (boundary == Boundary::Absorbing && (i == 0 || last)) {
          for (int side : {-1, 1}) {
            if ((side < 0 && i != 0) || (side > 0 && !last)) continue;
            model::Point ghost = ca, face = ca;
            ghost[static_cast<std::size_t>(k)] += side * h[k];
            face[static_cast<std::size_t>(k)] += side * 0.5 * h[k];
            double wg = weight(ghost, k);
            if (!(wg > 0) || !std::isfinite(wg) || !m.domain().contains(std::span<const double>(ghost.data(), d))) wg = wa;
            parts.killing[a] += harmonic(wa, wg) * area / h[k];
            double F = drift_flux(face, k) * area * side;
            if (!std::isfinite(F)) F = 0.0;
            parts.ghost_flux[a] += 0.5 * F;
          }
        }
      }
    }
  }
  GeneratorMatrix G = assemble(parts, boundary, true);
  G.grid = grid;
  return G;
}

GeneratorMatrix principal_submatrix(const GeneratorMatrix& G, const std::vector<int>& keep) {
  GeneratorMatrix S;
  S.mu.resize(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) S.mu[static_cast<Eigen::Index>(k)] = G.mu[keep[k]];
  S.L0 = submatrix(G.L0, keep);
  S.N = submatrix(G.N, keep);
  S.L = submatrix(G.L, keep);
  S.boundary = Boundary::Absorbing;
  return S;
}

StructureReport check_structure(const GeneratorMatrix& G) {
  StructureReport r;
  const SpMat M0 = diag(G.mu) * G.L0;
  const SpMat S = diag(G.mu) * G.N;
  const double s0 = std::max(max_abs(M0), 1e-300);
  r.mu_symmetry = max_abs(SpMat(M0 - SpMat(M0.transpose()))) / s0;
  const double ss = max_abs(S);
  r.drift_antisymmetry = ss > 0 ? max_abs(SpMat(S + SpMat(S.transpose()))) / ss : 0.0;
  double mo = INFINITY, scale = 0.0;
  for (int k = 0; k < G.L.outerSize(); ++k)
    for (SpMat::InnerIterator it(G.L, k); it; ++it) {
      if (it.row() != it.col()) mo = std::min(mo, it.value());
      scale = std::max(scale, std::fabs(it.value()));
    }
  r.min_offdiag = std::isfinite(mo) ? mo : 0.0;
  const Vec rs = row_sums(G.L);
  r.max_row_sum = rs.maxCoeff() / std::max(scale, 1e-300);
  r.max_abs_row_sum = max_abs(rs) / std::max(scale, 1e-300);
  return r;
}

double inner(const GeneratorMatrix& G, const Vec& u, const Vec& v) { return (G.mu.array() * u.array() * v.array()).sum(); }

double energy0(const GeneratorMatrix& G, const Vec& u, const Vec& v) { return inner(G, -(G.L0 * u), v); }

double energy(const GeneratorMatrix& G, const Vec& u, const Vec& v) { return inner(G, -(G.L * u), v); }

// ---------------------------------------------------------------- resolvents

struct Resolvent::Impl {
  Eigen::SparseLU<SpMat> lu;
};

Resolvent::Resolvent(const SpMat& L, double alpha, const Vec& h) : impl_(std::make_shared<Impl>()) {
  const Eigen::Index n = L.rows();
  Vec shift = Vec::Constant(n, alpha);
  if (h.size()) shift += h;
  SpMat A = diag(shift) - L;
  A.makeCompressed();
  impl_->lu.compute(A);
  if (impl_->lu.info() != Eigen::Success) fail("SingularSystem", "resolvent matrix is singular");
}

Vec Resolvent::solve(const Vec& f) const {
  Vec u = impl_->lu.solve(f);
  if (impl_->lu.info() != Eigen::Success || !u.allFinite()) fail("SingularSystem", "resolvent solve failed");
  return u;
}

Vec resolvent(const GeneratorMatrix& G, double alpha, const Vec& f) {
  if (!(alpha > 0)) fail("InvalidArgument", "alpha must be positive");
  return Resolvent(G.L, alpha).solve(f);
}

Vec resolvent_adjoint(const GeneratorMatrix& G, double alpha, const Vec& f) {
  if (!(alpha > 0)) fail("InvalidArgument", "alpha must be positive");
  return Resolvent(G.adjoint(), alpha).solve(f);
}

// ---------------------------------------------------------------- potential operator

Potential potential_dichotomy(const GeneratorMatrix& G, const Vec& f) {
  const int n = G.size();
  if (f.size() != n) fail("InvalidArgument", "f has the wrong length");
  if (f.minCoeff() < 0) fail("InvalidArgument", "f must be nonnegative");
  Potential P;
  P.value = Vec::Zero(n);
  const auto out = out_edges(G.L);
  int nc = 0;
  const std::vector<int> comp = strong_components(out, nc);
  const Vec rs = row_sums(G.L);
  std::vector<char> closed(static_cast<std::size_t>(nc), 1), killed(static_cast<std::size_t>(nc), 0),
      charged(static_cast<std::size_t>(nc), 0);
  for (int i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(comp[static_cast<std::size_t>(i)]);
    for (int j : out[static_cast<std::size_t>(i)])
      if (comp[static_cast<std::size_t>(j)] != comp[static_cast<std::size_t>(i)]) closed[c] = 0;
    if (rs[i] < -1e-12 * std::fabs(G.L.coeff(i, i))) killed[c] = 1;
    if (f[i] > 0) charged[c] = 1;
  }
  std::vector<char> hot(static_cast<std::size_t>(n), 0), cold(static_cast<std::size_t>(n), 0);
  int recurrent_classes = 0;
  for (int i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(comp[static_cast<std::size_t>(i)]);
    if (closed[c] && !killed[c]) {
      (charged[c] ? hot : cold)[static_cast<std::size_t>(i)] = 1;
    }
  }
  for (int c = 0; c < nc; ++c)
    if (closed[static_cast<std::size_t>(c)] && !killed[static_cast<std::size_t>(c)]) ++recurrent_classes;
  const std::vector<char> div = ancestors(out, hot);
  std::vector<int> rest;
  for (int i = 0; i < n; ++i) {
    if (div[static_cast<std::size_t>(i)]) {
      P.divergent_states.push_back(i);
      P.value[i] = INFINITY;
    } else if (!cold[static_cast<std::size_t>(i)]) {
      rest.push_back(i);
    }
  }
  P.finite = P.divergent_states.empty();
  if (!rest.empty()) {
    SpMat A = -submatrix(G.L, rest);
    A.makeCompressed();
    Vec fr(static_cast<Eigen::Index>(rest.size()));
    for (std::size_t k = 0; k < rest.size(); ++k) fr[static_cast<Eigen::Index>(k)] = f[rest[k]];
    Eigen::SparseLU<SpMat> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) fail("SingularSystem", "transient block of -L is singular");
    const Vec u = lu.solve(fr);
    for (std::size_t k = 0; k < rest.size(); ++k) P.value[rest[k]] = std::max(0.0, u[static_cast<Eigen::Index>(k)]);
  }
  P.certificate["classes"] = nc;
  P.certificate["recurrent_classes"] = recurrent_classes;
  P.certificate["divergent_states"] = P.divergent_states.size();
  if (!P.finite) {
    // alpha-ladder: alpha G_alpha f tends to a positive limit on divergent states.
    std::vector<double> alphas;
    std::vector<Vec> sols;
    for (int k = 0; k <= 12; ++k) {
      const double a = std::pow(4.0, -k);
      alphas.push_back(a);
      sols.push_back(Resolvent(G.L, a).solve(f));
    }
    double smin = INFINITY, smax = -INFINITY, lmin = INFINITY, lmax = 0.0;
    for (int i : P.divergent_states) {
      const double y1 = std::log(sols[10][i]), y2 = std::log(sols[12][i]);
      const double slope = (y2 - y1) / (std::log(alphas[12]) - std::log(alphas[10]));
      smin = std::min(smin, slope);
      smax = std::max(smax, slope);
      const double lim = alphas[12] * sols[12][i];
      lmin = std::min(lmin, lim);
      lmax = std::max(lmax, lim);
    }
    json ladder = json::array();
    for (std::size_t k = 0; k < alphas.size(); ++k) {
      double lo = INFINITY, hi = 0.0;
      for (int i : P.divergent_states) {
        lo = std::min(lo, alphas[k] * sols[k][i]);
        hi = std::max(hi, alphas[k] * sols[k][i]);
      }
      ladder.push_back({{"alpha", alphas[k]}, {"alpha_G_f_min", lo}, {"alpha_G_f_max", hi}});
    }
    P.certificate["ladder"] = ladder;
    P.certificate["log_slope_min"] = smin;
    P.certificate["log_slope_max"] = smax;
    P.certificate["alpha_G_f_limit_min"] = lmin;
    P.certificate["alpha_G_f_limit_max"] = lmax;
    P.certificate["rate_confirmed"] = smin >= -1.05 && smax <= -0.95 && lmin > 0;
  }
  return P;
}

// ---------------------------------------------------------------- identities

TitReport verify_tit(const GeneratorMatrix& G, const std::vector<double>& alphas, int n_random, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TitReport r;
  for (double a : alphas) {
    const Resolvent R(G.L, a);
    for (int s = 0; s < n_random; ++s) {
      const Vec u = R.solve(random_vector(rng, G.size(), 0.0, 1.0));
      const double e0 = energy0(G, u, u), e = energy(G, u, u);
      r.max_gap = std::max(r.max_gap, std::fabs(e - e0) / std::max(1.0, std::fabs(e0)));
      const double nu = inner(G, u, u);
      if (nu > 0) r.max_drift_energy = std::max(r.max_drift_energy, std::fabs(inner(G, G.N * u, u)) / nu);
      if (e0 > e + 1e-10 * std::max(1.0, std::fabs(e0))) r.dominated = false;
    }
  }
  return r;
}

double verify_notran1(const GeneratorMatrix& G, const Vec& g, const Vec& u) {
  const Potential P = potential_dichotomy(G, g);
  if (!P.finite) fail("NotTransient", "Gg diverges on " + std::to_string(P.divergent_states.size()) + " states");
  const Vec& w = P.value;
  const double lhs = inner(G, u, g);
  const double e0 = energy0(G, w, u);
  const double dr = inner(G, w, G.N * u);
  const double scale = std::max({std::fabs(lhs), std::fabs(e0), std::fabs(dr), 1e-300});
  return std::fabs(lhs - e0 - dr) / scale;
}

GoodG find_good_g(const GeneratorMatrix& G, const Vec& f_in, double tau) {
  const int n = G.size();
  if (!(tau > 0)) fail("InvalidArgument", "tau must be positive");
  if (f_in.size() != n || !(f_in.minCoeff() > 0)) fail("InvalidArgument", "f must be strictly positive");
  const double s = std::max({max_abs(f_in), G.mu.dot(f_in), 1.0});
  const Vec f = f_in / s;
  const Potential P = potential_dichotomy(G, f);
  if (!P.finite) fail("NotTransient", "Gf diverges; the chain is not transient");
  const Vec& Gf = P.value;

  Eigen::MatrixXd E;
  const bool dense = n <= 400;
  if (dense) E = linalg::expm(Eigen::MatrixXd(G.L), tau);
  auto T = [&](const Vec& v, int k) {
    Vec w = v;
    for (int i = 0; i < k; ++i) w = dense ? Vec(E * w) : linalg::expmv(G.L, tau, w);
    return w;
  };

  // Onset index k(x): first k with int_0^{k tau} T_t f > 0, from int_0^s T_t f = Gf - T_s Gf.
  std::vector<int> onset(static_cast<std::size_t>(n), 0);
  int remaining = n;
  Vec TGf = Gf;
  int k = 0;
  while (remaining > 0 && k < 64) {
    ++k;
    TGf = T(TGf, 1);
    for (int i = 0; i < n; ++i)
      if (!onset[static_cast<std::size_t>(i)] && Gf[i] - TGf[i] > 0) {
        onset[static_cast<std::size_t>(i)] = k;
        --remaining;
      }
  }
  GoodG out;
  out.tau = tau;
  out.onset_steps = k;
  std::map<std::pair<int, int>, std::vector<int>> pieces;
  for (int i = 0; i < n; ++i) {
    const int m = static_cast<int>(std::floor(Gf[i])) + 1;
    const int kk = onset[static_cast<std::size_t>(i)];
    if (kk > 0) pieces[{m, kk}].push_back(i);
  }
  out.g = Vec::Zero(n);
  std::map<int, int> levels;
  for (const auto& [key, cells] : pieces) {
    const auto [m, kk] = key;
    levels[m] = 1;
    const Vec vm = Gf.cwiseMin(static_cast<double>(m));
    const Vec gmk = vm - T(vm, kk);
    double mass = 0.0;
    for (int i : cells) mass += G.mu[i];
    const double c = std::max(1.0, mass);
    const double wgt = std::ldexp(1.0, -m - kk) / c;
    for (int i : cells) out.g[i] += wgt * gmk[i];
    out.bound += static_cast<double>(m) * kk * tau * wgt;
  }
  out.levels = static_cast<int>(levels.size());
  out.Gg = Resolvent(G.L, 0.0).solve(out.g);
  out.positive = out.g.minCoeff() > 0;
  out.within_bound = out.Gg.maxCoeff() <= out.bound * (1 + 1e-10);
  return out;
}

IdentityResult killed_resolvent(const GeneratorMatrix& G, const Vec& h, double alpha, const Vec& f) {
  if (h.size() && h.minCoeff() < 0) fail("InvalidArgument", "h must be nonnegative");
  IdentityResult r;
  const Resolvent Rh(G.L, alpha, h);
  r.u = Rh.solve(f);
  const Vec rhs = G.L.rows() ? Vec(f - h.cwiseProduct(r.u)) : Vec();
  const Vec v = Resolvent(G.L, alpha).solve(rhs);
  r.residual = max_abs(Vec(r.u - v)) / std::max(max_abs(r.u), 1e-300);
  const Vec one = alpha * Rh.solve(Vec::Ones(G.size()));
  r.sub_markov_violation = std::max({0.0, -one.minCoeff(), one.maxCoeff() - 1.0});
  return r;
}

IdentityResult time_changed_resolvent(const GeneratorMatrix& G, const Vec& h, double eps, double alpha, const Vec& f) {
  if (!(eps > 0)) fail("InvalidArgument", "eps must be positive");
  if (h.minCoeff() < 0) fail("InvalidArgument", "h must be nonnegative");
  const Vec he = (h.array() + eps).matrix();
  const SpMat Le = diag(he.cwiseInverse()) * G.L;
  IdentityResult r;
  const Resolvent Re(Le, alpha);
  r.u = Re.solve(f);
  const Vec rhs = he.cwiseProduct(f) + alpha * (Vec::Ones(G.size()) - he).cwiseProduct(r.u);
  const Vec v = Resolvent(G.L, alpha).solve(rhs);
  r.residual = max_abs(Vec(r.u - v)) / std::max(max_abs(r.u), 1e-300);
  const Vec one = alpha * Re.solve(Vec::Ones(G.size()));
  r.sub_markov_violation = std::max({0.0, -one.minCoeff(), one.maxCoeff() - 1.0});
  return r;
}

Rec3Report rec3_chi(const GeneratorMatrix& G, const Vec& h, const std::vector<double>& n_list, double tol) {
  const Vec rs = row_sums(G.L);
  const double scale = std::max(max_abs(Vec(G.L.diagonal())), 1e-300);
  if (max_abs(rs) > 1e-10 * scale) fail("NotConservative", "row sums of L deviate from zero");
  if (!(h.minCoeff() > 0)) fail("InvalidArgument", "h must be strictly positive");
  Rec3Report r;
  Vec prev;
  for (double n : n_list) {
    const Vec chi = Resolvent(G.L, 1.0 / n, h).solve(h);
    const Vec Lchi = G.L * chi;
    const double e = inner(G, -Lchi, chi);
    const double b = G.mu.dot(h.cwiseProduct(Vec::Ones(G.size()) - chi));
    const double l1 = G.mu.dot(Lchi.cwiseAbs());
    r.n.push_back(n);
    r.energy.push_back(e);
    r.bound.push_back(b);
    r.l1_defect.push_back(l1);
    r.gap.push_back(1.0 - chi.minCoeff());
    if (chi.minCoeff() < -tol || chi.maxCoeff() > 1 + tol) r.in_range = false;
    if (e > b + tol * std::max(1.0, b)) r.energy_bounded = false;
    if (prev.size() && (chi - prev).minCoeff() < -tol) r.monotone = false;
    const std::size_t k = r.n.size();
    if (k > 1) {
      if (r.energy[k - 1] > r.energy[k - 2] * (1 + tol) + tol) r.energy_decreasing = false;
      if (r.l1_defect[k - 1] > r.l1_defect[k - 2] * (1 + tol) + tol) r.l1_decreasing = false;
    }
    prev = chi;
  }
  return r;
}

ConservativenessReport conservativeness_check(const GeneratorMatrix& G, const std::vector<double>& t_list) {
  ConservativenessReport r;
  const Vec one = Vec::Ones(G.size());
  for (double t : t_list) {
    const Vec w = linalg::expmv(G.L, t, one);
    const double dev = max_abs(Vec(one - w));
    r.t.push_back(t);
    r.deviation.push_back(dev);
    r.max_deviation = std::max(r.max_deviation, dev);
  }
  return r;
}

InvariantSets weakly_invariant_sets(const GeneratorMatrix& G) {
  const int n = G.size();
  const auto out = out_edges(G.L);
  int nc = 0;
  const std::vector<int> comp = strong_components(out, nc);
  InvariantSets r;
  r.classes = nc;
  if (nc > 1 && nc <= 2000) {
    std::vector<std::vector<int>> seen;
    for (int c = 0; c < nc; ++c) {
      std::vector<char> t(static_cast<std::size_t>(n), 0);
      for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = comp[static_cast<std::size_t>(i)] == c;
      const std::vector<char> up = ancestors(out, t);
      std::vector<int> set;
      for (int i = 0; i < n; ++i)
        if (up[static_cast<std::size_t>(i)]) set.push_back(i);
      if (static_cast<int>(set.size()) == n) continue;
      if (std::find(seen.begin(), seen.end(), set) == seen.end()) seen.push_back(set);
    }
    std::sort(seen.begin(), seen.end());
    r.sets = seen;
  }
  r.irreducible = nc == 1;
  if (n <= 30) {
    const Eigen::MatrixXd E = linalg::expm(Eigen::MatrixXd(G.L), 1.0);
    r.positivity_cross_check = (E.array() > 0).all();
  }
  return r;
}

ExhaustionReport exhaustion(const GeneratorMatrix& full, const std::vector<std::vector<int>>& nested, double alpha,
                            const Vec& f, double tol) {
  ExhaustionReport r;
  const int n = full.size();
  std::vector<char> prev(static_cast<std::size_t>(n), 0);
  bool first = true;
  for (const auto& set : nested) {
    std::vector<char> in(static_cast<std::size_t>(n), 0);
    for (int i : set) in[static_cast<std::size_t>(i)] = 1;
    if (!first)
      for (int i = 0; i < n; ++i)
        if (prev[static_cast<std::size_t>(i)] && !in[static_cast<std::size_t>(i)])
          fail("InvalidArgument", "truncations are not nested");
    first = false;
    prev = in;
    std::vector<int> keep = set;
    std::sort(keep.begin(), keep.end());
    const SpMat Ls = submatrix(full.L, keep);
    Vec fs(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) fs[static_cast<Eigen::Index>(k)] = f[keep[k]];
    const Vec us = Resolvent(Ls, alpha).solve(fs);
    Vec u = Vec::Zero(n);
    for (std::size_t k = 0; k < keep.size(); ++k) u[keep[k]] = us[static_cast<Eigen::Index>(k)];
    r.sizes.push_back(static_cast<int>(keep.size()));
    r.solutions.push_back(u);
  }
  for (std::size_t k = 1; k < r.solutions.size(); ++k) {
    const double scale = std::max(max_abs(r.solutions[k]), 1e-300);
    r.max_violation = std::max(r.max_violation, (r.solutions[k - 1] - r.solutions[k]).maxCoeff() / scale);
  }
  r.max_violation = std::max(r.max_violation, 0.0);
  if (!r.solutions.empty()) r.limit = r.solutions.back();
  if (r.max_violation > tol) {
    std::ostringstream os;
    os << "resolvent decreased by " << r.max_violation << " (relative) between nested truncations";
    fail("MonotonicityViolation", os.str());
  }
  return r;
}

ExhaustionReport domain_exhaustion(const model::Model& m, const Grid& largest, const std::vector<double>& extents,
                                   double alpha, const std::function<double(const model::Point&)>& f, double tol) {
  const GeneratorMatrix G = build_generator(m, largest, Boundary::Absorbing);
  const int n = G.size();
  Vec fv(n);
  for (int i = 0; i < n; ++i) {
    fv[i] = f(largest.center(i));
    if (fv[i] < 0) fail("InvalidArgument", "f must be nonnegative");
  }
  std::vector<double> ext = extents;
  std::sort(ext.begin(), ext.end());
  std::vector<std::vector<int>> nested;
  for (double e : ext) {
    std::vector<int> set;
    for (int i = 0; i < n; ++i) {
      const model::Point c = largest.center(i);
      double r = std::fabs(c[0]);
      if (largest.dim == 2) r = std::max(r, std::fabs(c[1]));
      if (r <= e) set.push_back(i);
    }
    if (!set.empty()) nested.push_back(set);
  }
  return exhaustion(G, nested, alpha, fv, tol);
}

// ---------------------------------------------------------------- lab driver

double LabReport::max_residual() const {
  double m = 0.0;
  for (const auto& [k, v] : residuals.items())
    if (v.is_number()) m = std::max(m, v.get<double>());
  return m;
}

json to_json(const LabReport& r) {
  return {{"residuals", r.residuals},
          {"max_residual", r.max_residual()},
          {"verdicts", r.verdicts},
          {"tolerances", r.tolerances},
          {"info", r.info},
          {"warnings", r.warnings}};
}

LabReport run_lab(const model::Model& m, const LabOptions& opt) {
  const int d = m.dim();
  if (d > 2) fail("UnsupportedDimension", "the lab discretises d = 1 and d = 2 only");
  const int cells = opt.cells > 0 ? opt.cells : (d == 1 ? 2000 : 64);
  const Grid grid = uniform_grid(d, cells, opt.extent);
  LabReport rep;
  const GeneratorMatrix Ga = build_generator(m, grid, Boundary::Absorbing);
  const GeneratorMatrix Gc = build_generator(m, grid, d == 1 ? Boundary::Periodic : Boundary::Reflecting);
  for (const auto* G : {&Ga, &Gc})
    for (const auto& w : G->warnings) rep.warnings.push_back(to_string(G->boundary) + ": " + w);
  std::mt19937_64 rng(opt.seed);
  const int n = Ga.size();

  rep.info["states"] = n;
  rep.info["cells_per_axis"] = cells;
  rep.info["extent"] = opt.extent;
  rep.info["projection_size"] = {{"absorbing", Ga.projection_size}, {"conservative", Gc.projection_size}};
  rep.info["conservative_boundary"] = to_string(Gc.boundary);

  for (const auto* G : {&Ga, &Gc}) {
    const std::string tag = G == &Ga ? "absorbing" : "conservative";
    const StructureReport s = check_structure(*G);
    rep.residuals["mu_symmetry_" + tag] = s.mu_symmetry;
    rep.residuals["drift_antisymmetry_" + tag] = s.drift_antisymmetry;
    rep.residuals["negative_offdiag_" + tag] = std::max(0.0, -s.min_offdiag);
    rep.residuals["positive_row_sum_" + tag] = std::max(0.0, s.max_row_sum);
    if (G == &Gc) rep.residuals["row_sum_conservative"] = s.max_abs_row_sum;

    // Resolvent identity and sub-Markov bounds.
    double rid = 0.0, sm = 0.0;
    const SpMat Lh = G->adjoint();
    for (std::size_t a = 0; a < opt.alphas.size(); ++a) {
      const Resolvent Ra(G->L, opt.alphas[a]), Rha(Lh, opt.alphas[a]);
      for (int s2 = 0; s2 < opt.n_random; ++s2) {
        const Vec f = random_vector(rng, n, 0.0, 1.0);
        const Vec u = opt.alphas[a] * Ra.solve(f), uh = opt.alphas[a] * Rha.solve(f);
        sm = std::max({sm, -u.minCoeff(), u.maxCoeff() - 1.0, -uh.minCoeff(), uh.maxCoeff() - 1.0});
      }
      for (std::size_t b = a + 1; b < opt.alphas.size(); ++b) {
        const double al = opt.alphas[a], be = opt.alphas[b];
        const Resolvent Rb(G->L, be);
        const Vec f = random_vector(rng, n, -1.0, 1.0);
        const Vec ga = Ra.solve(f), gb = Rb.solve(f);
        const Vec gab = Ra.solve(gb);
        rid = std::max(rid, max_abs(Vec(ga - gb - (be - al) * gab)) / max_abs(f));
      }
    }
    rep.residuals["resolvent_identity_" + tag] = rid;
    rep.residuals["sub_markov_" + tag] = std::max(0.0, sm);

    const TitReport tit = verify_tit(*G, opt.alphas, opt.n_random, opt.seed + 7);
    rep.residuals["energy_gap_" + tag] = tit.max_gap;
    rep.residuals["diagonal_drift_energy_" + tag] = tit.max_drift_energy;
    rep.verdicts["energy_dominated_" + tag] = tit.dominated;

    const Vec h = random_vector(rng, n, 0.5, 1.5);
    const Vec f = random_vector(rng, n, 0.0, 1.0);
    rep.residuals["killed_identity_" + tag] = killed_resolvent(*G, h, 1.0, f).residual;
    rep.residuals["killed_sub_markov_" + tag] = killed_resolvent(*G, h, 1.0, f).sub_markov_violation;
    const IdentityResult tc = time_changed_resolvent(*G, h, 0.5, 1.0, f);
    rep.residuals["time_changed_identity_" + tag] = tc.residual;
    rep.residuals["time_changed_sub_markov_" + tag] = tc.sub_markov_violation;

    const InvariantSets inv = weakly_invariant_sets(*G);
    rep.verdicts["irreducible_" + tag] = inv.irreducible;
    rep.verdicts["weakly_invariant_sets_" + tag] = inv.sets.size();
  }

  // Transient (absorbing) instance.
  {
    const Vec g = random_vector(rng, n, 0.1, 1.0);
    const Potential P = potential_dichotomy(Ga, g);
    rep.verdicts["dichotomy_absorbing"] = P.finite ? "finite" : "divergent";
    rep.residuals["notran1"] = verify_notran1(Ga, g, random_vector(rng, n, -1.0, 1.0));
    const double tau = opt.tau > 0 ? opt.tau : (n <= 400 ? 1.0 : 1.0 / linalg::norm1(Ga.L));
    const GoodG gg = find_good_g(Ga, random_vector(rng, n, 0.1, 1.0), tau);
    rep.verdicts["good_g_positive"] = gg.positive;
    rep.verdicts["good_g_within_bound"] = gg.within_bound;
    rep.info["good_g"] = {{"tau", tau}, {"bound", gg.bound}, {"max_Gg", gg.Gg.maxCoeff()}, {"levels", gg.levels}};
    rep.residuals["good_g_bound_excess"] = std::max(0.0, gg.Gg.maxCoeff() / gg.bound - 1.0);
    const ConservativenessReport cr = conservativeness_check(Ga, {0.01, 0.1});
    rep.info["mass_loss_absorbing"] = cr.max_deviation;
    std::vector<double> ext;
    for (double q : {0.25, 0.5, 0.75, 1.0}) ext.push_back(q * opt.extent);
    const ExhaustionReport ex = domain_exhaustion(m, grid, ext, 1.0, [](const model::Point&) { return 1.0; });
    rep.residuals["exhaustion_monotonicity"] = ex.max_violation;
  }
  // Conservative instance.
  {
    Vec f = Vec::Zero(n);
    f[n / 2] = 1.0;
    const Potential P = potential_dichotomy(Gc, f);
    rep.verdicts["dichotomy_conservative"] = P.finite ? "finite" : "divergent";
    if (!P.finite) rep.info["dichotomy_conservative"] = P.certificate;
    const Rec3Report r3 = rec3_chi(Gc, random_vector(rng, n, 0.5, 1.5), {1, 10, 100, 1000, 10000});
    rep.verdicts["rec3_passed"] = r3.passed();
    rep.info["rec3"] = {{"n", r3.n}, {"energy", r3.energy}, {"bound", r3.bound}, {"l1_defect", r3.l1_defect},
                        {"gap", r3.gap}};
    const ConservativenessReport cr = conservativeness_check(Gc, {0.01, 0.1});
    rep.residuals["conservativeness"] = cr.max_deviation;
  }
  rep.tolerances = {{"residual", 1e-8}, {"alphas", opt.alphas}, {"seed", opt.seed}, {"n_random", opt.n_random}};
  return rep;
}

void write_coo(std::ostream& os, const SpMat& A) {
  os << std::setprecision(17);
  std::vector<std::tuple<int, int, double>> e;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it)
      e.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  std::sort(e.begin(), e.end());
  for (const auto& [r, c, v] : e) os << r << ' ' << c << ' ' << v << '\n';
}

void write_weights(std::ostream& os, const Vec& mu) {
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < mu.size(); ++i) os << mu[i] << '\n';
}

}  // namespace rtd::lab
