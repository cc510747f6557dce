#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <nlohmann/json.hpp>

#include "rtd/model.hpp"

namespace rtd::lab {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

enum class Boundary { Reflecting, Absorbing, Periodic };
std::string to_string(Boundary b);
Boundary boundary_from_string(const std::string& s);

// Uniform cell-centred lattice on a box (d = 1 or 2). Cell index i + n[0]*j.
struct Grid {
  int dim = 1;
  int n[2] = {1, 1};
  double lo[2] = {0.0, 0.0};
  double hi[2] = {1.0, 1.0};

  int cells() const { return n[0] * (dim == 2 ? n[1] : 1); }
  double spacing(int axis) const { return (hi[axis] - lo[axis]) / n[axis]; }
  model::Point center(int idx) const;
};

Grid uniform_grid(int dim, int cells_per_axis, double extent);

struct Edge {
  int i = 0, j = 0;
  double value = 0.0;
};

// Raw ingredients: cell masses, symmetric conductances c_ij, killing rates
// towards absorbing ghosts, antisymmetric drift fluxes K_ij (stored for i < j
// as K_ij, with K_ji = -K_ij) and fluxes K_ig into the ghosts.
struct GeneratorParts {
  Vec mu;
  std::vector<Edge> conductance;
  Vec killing;
  std::vector<Edge> flux;
  Vec ghost_flux;
};

struct GeneratorMatrix {
  Vec mu;
  SpMat L0, N, L;
  Boundary boundary = Boundary::Reflecting;
  std::optional<Grid> grid;
  double projection_size = 0.0;  // relative size of the divergence correction
  std::vector<std::string> warnings;

  int size() const { return static_cast<int>(mu.size()); }
  // mu-weighted adjoint mu^{-1} L^T mu.
  SpMat adjoint() const;
};

// Builds L0 = mu^{-1}(C - diag(C 1 + kappa)) and N = mu^{-1} S with S the
// antisymmetric flux matrix. With `project`, the fluxes are corrected by the
// least-squares graph gradient that makes every cell divergence-free, so
// sum_i mu_i (N f)_i f_i = 0 holds exactly. Throws lab.EllipticityLoss when a
// flux exceeds its conductance and lab.NonPositiveWeight for mu <= 0.
GeneratorMatrix assemble(const GeneratorParts& parts, Boundary boundary, bool project = true);

// Two-point flux finite volumes: face conductances are harmonic means of
// phi * a_kk, drift fluxes are central (phi B . n) at face midpoints.
GeneratorMatrix build_generator(const model::Model& m, const Grid& grid, Boundary boundary);

// Restriction to the cells in `keep` (an absorbing truncation).
GeneratorMatrix principal_submatrix(const GeneratorMatrix& G, const std::vector<int>& keep);

struct StructureReport {
  double mu_symmetry = 0.0;        // max |mu_i L0_ij - mu_j L0_ji|, relative
  double drift_antisymmetry = 0.0; // max |S + S^T|, relative
  double min_offdiag = 0.0;        // smallest off-diagonal entry of L
  double max_row_sum = 0.0;        // largest row sum of L, relative
  double max_abs_row_sum = 0.0;    // relative
};

StructureReport check_structure(const GeneratorMatrix& G);

double inner(const GeneratorMatrix& G, const Vec& u, const Vec& v);
// E0(u, v) = <-L0 u, v>_mu.
double energy0(const GeneratorMatrix& G, const Vec& u, const Vec& v);
double energy(const GeneratorMatrix& G, const Vec& u, const Vec& v);

// Factorised (alpha + h - L)^{-1}.
class Resolvent {
 public:
  Resolvent(const SpMat& L, double alpha, const Vec& h = Vec());
  Vec solve(const Vec& f) const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

Vec resolvent(const GeneratorMatrix& G, double alpha, const Vec& f);
Vec resolvent_adjoint(const GeneratorMatrix& G, double alpha, const Vec& f);

struct Potential {
  bool finite = true;
  Vec value;  // +infinity on divergent states
  std::vector<int> divergent_states;
  nlohmann::json certificate = nlohmann::json::object();
};

// Gf = lim G_alpha f, resolved by communicating-class analysis; divergent
// states carry an alpha-ladder certificate of the 1/alpha blow-up.
Potential potential_dichotomy(const GeneratorMatrix& G, const Vec& f);

struct TitReport {
  double max_gap = 0.0;          // max |E(u,u) - E0(u,u)| / max(1, E0(u,u))
  double max_drift_energy = 0.0; // max |<N u, u>_mu| / ||u||_mu^2
  bool dominated = true;         // E0(u,u) <= E(u,u) up to roundoff
};

TitReport verify_tit(const GeneratorMatrix& G, const std::vector<double>& alphas, int n_random, std::uint64_t seed);

// |<u, g>_mu - E0(Gg, u) - <Gg, N u>_mu| / scale. Throws lab.NotTransient.
double verify_notran1(const GeneratorMatrix& G, const Vec& g, const Vec& u);

struct GoodG {
  Vec g, Gg;
  double bound = 0.0;
  double tau = 1.0;
  bool positive = false;
  bool within_bound = false;
  int levels = 0;
  int onset_steps = 0;
};

// Level-set construction g = sum g~_mk / (2^m 2^k c_mk) with time unit tau.
GoodG find_good_g(const GeneratorMatrix& G, const Vec& f, double tau = 1.0);

struct IdentityResult {
  Vec u;
  double residual = 0.0;
  double sub_markov_violation = 0.0;
};

// (alpha + h - L)^{-1} f and the identity G^h f = G(f - h G^h f).
IdentityResult killed_resolvent(const GeneratorMatrix& G, const Vec& h, double alpha, const Vec& f);
// (alpha - L/(h + eps))^{-1} f and G^eps f = G((h+eps) f + alpha (1 - (h+eps)) G^eps f).
IdentityResult time_changed_resolvent(const GeneratorMatrix& G, const Vec& h, double eps, double alpha, const Vec& f);

struct Rec3Report {
  std::vector<double> n, energy, bound, l1_defect, gap;
  bool in_range = true;
  bool monotone = true;
  bool energy_bounded = true;
  bool energy_decreasing = true;
  bool l1_decreasing = true;
  bool passed() const { return in_range && monotone && energy_bounded && energy_decreasing && l1_decreasing; }
};

// chi_n = (1/n + h - L)^{-1} h on a conservative chain. Throws lab.NotConservative.
Rec3Report rec3_chi(const GeneratorMatrix& G, const Vec& h, const std::vector<double>& n_list, double tol = 1e-8);

struct ConservativenessReport {
  std::vector<double> t, deviation;
  double max_deviation = 0.0;
};

ConservativenessReport conservativeness_check(const GeneratorMatrix& G, const std::vector<double>& t_list);

struct InvariantSets {
  // Principal nontrivial weakly invariant sets: a class with all its ancestors.
  std::vector<std::vector<int>> sets;
  int classes = 0;
  bool irreducible = true;
  std::optional<bool> positivity_cross_check;
};

InvariantSets weakly_invariant_sets(const GeneratorMatrix& G);

struct ExhaustionReport {
  std::vector<int> sizes;
  std::vector<Vec> solutions;  // zero-extended to the largest set
  double max_violation = 0.0;
  Vec limit;
};

// Resolvents on nested absorbing truncations; throws lab.MonotonicityViolation.
ExhaustionReport exhaustion(const GeneratorMatrix& full, const std::vector<std::vector<int>>& nested, double alpha,
                            const Vec& f, double tol = 1e-12);
ExhaustionReport domain_exhaustion(const model::Model& m, const Grid& largest, const std::vector<double>& extents,
                                   double alpha, const std::function<double(const model::Point&)>& f,
                                   double tol = 1e-12);

struct LabOptions {
  int cells = 0;        // per axis; 0 picks 2000 (d = 1) or 64 (d = 2)
  double extent = 5.0;  // half-width of the box
  std::uint64_t seed = 1;
  int n_random = 4;
  std::vector<double> alphas{0.1, 1.0, 10.0};
  double tau = 0.0;     // 0 picks 1 / ||L||_1 for large grids
};

struct LabReport {
  nlohmann::json residuals = nlohmann::json::object();
  nlohmann::json verdicts = nlohmann::json::object();
  nlohmann::json tolerances = nlohmann::json::object();
  nlohmann::json info = nlohmann::json::object();
  std::vector<std::string> warnings;
  double max_residual() const;
};

nlohmann::json to_json(const LabReport& r);

LabReport run_lab(const model::Model& m, const LabOptions& opt = {});

void write_coo(std::ostream& os, const SpMat& A);
void write_weights(std::ostream& os, const Vec& mu);

}  // namespace rtd::lab
