#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtd/expression.hpp"

namespace rtd::model {

constexpr int kMaxDim = 3;
using Point = std::array<double, kMaxDim>;

enum class DomainKind { FullSpace, Interval, Ball };

struct Domain {
  DomainKind kind = DomainKind::FullSpace;
  double lower = 0.0;  // interval
  double upper = 0.0;  // interval
  double radius = 0.0;  // ball centred at the origin
  bool open = true;

  bool contains(std::span<const double> x) const;
  // Largest s >= 0 with s*theta still in the domain (infinite for full space).
  double ray_exit(std::span<const double> theta) const;
};

// Power-law tail v1(r) ~ C r^gamma declared by the user.
struct TailLaw {
  double C = 0.0;
  double gamma = 0.0;
};

struct Assumptions {
  bool condition_C = true;
  bool heat_kernel_bounds = false;
};

// Coefficient data (d, E, phi, A, B, rho) of L = L0 + <B, grad>.
struct ModelSpec {
  std::string name = "custom";
  int dimension = 1;
  Domain domain;
  std::string phi = "1";
  std::vector<std::vector<std::string>> A;  // d x d
  std::vector<std::string> B;               // d
  // Optional closed form of phi * B, used where the product over- or underflows.
  std::vector<std::string> flux;
  std::string rho = "norm(x)";
  bool smooth_phi = true;
  bool smooth_A = true;
  bool radial = false;
  std::optional<bool> irreducible;
  std::string irreducible_note;
  Assumptions assumptions;
  std::optional<TailLaw> tail_law;
  std::vector<std::vector<double>> singular_points;
  std::vector<double> kink_points;
  std::map<std::string, double> params;
  std::optional<double> r_max;
};

ModelSpec spec_from_json(const nlohmann::json& j);
nlohmann::json spec_to_json(const ModelSpec& s);

// Parsed, immutable model with symbolic derivatives prepared.
class Model {
 public:
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const { return spec_; }
  int dim() const { return spec_.dimension; }
  const std::string& name() const { return spec_.name; }
  const Domain& domain() const { return spec_.domain; }

  double phi(std::span<const double> x) const { return phi_(x); }
  double rho(std::span<const double> x) const { return rho_(x); }
  double a(int i, int j, std::span<const double> x) const { return A_[static_cast<std::size_t>(i * dim() + j)](x); }
  double b(int i, std::span<const double> x) const { return B_[static_cast<std::size_t>(i)](x); }
  void grad_rho(std::span<const double> x, double* out) const;
  void grad_phi(std::span<const double> x, double* out) const;
  // <A(x) xi, xi>; only the symmetric part contributes.
  double a_form(std::span<const double> x, const double* xi) const;
  double b_dot(std::span<const double> x, const double* xi) const;
  // phi * B_i, from the declared flux when present.
  double flux(int i, std::span<const double> x) const;
  double flux_dot(std::span<const double> x, const double* xi) const;
  bool has_flux() const { return !F_.empty(); }
  // Symmetric part of A at x, row-major d x d.
  void a_sym(std::span<const double> x, double* out) const;

  const expr::Expression& phi_expr() const { return phi_; }
  const expr::Expression& rho_expr() const { return rho_; }
  const expr::Expression& a_expr(int i, int j) const { return A_[static_cast<std::size_t>(i * dim() + j)]; }
  const expr::Expression& b_expr(int i) const { return B_[static_cast<std::size_t>(i)]; }
  const expr::Expression& dphi_expr(int k) const { return dphi_[static_cast<std::size_t>(k)]; }

  bool has_singular_origin() const;

 private:
  ModelSpec spec_;
  expr::Expression phi_, rho_;
  std::vector<expr::Expression> A_, B_, F_, dphi_, drho_;
};

// Catalogue: bm-d (bm-1, bm-2, bm-3), gauss-strongdrift, exp-generic,
// lebesgue-const-drift, power-weight.
ModelSpec builtin_spec(const std::string& name, const std::map<std::string, double>& params = {});
Model builtin_model(const std::string& name, const std::map<std::string, double>& params = {});
std::vector<std::string> builtin_names();

struct Box {
  std::vector<double> lo, hi;
};

struct EllipticityEstimate {
  double nu = 1.0;
  double q_min = 0.0;
  double q_max = 0.0;
  std::size_t samples = 0;
  // Extreme Rayleigh quotients of the symmetric part at each sampled point.
  std::vector<std::pair<double, double>> quotients;
};

EllipticityEstimate check_ellipticity(const Model& m, const Box& region, int n_samples);

struct ValidationReport {
  // (test-function id, |residual|)
  std::vector<std::pair<std::string, double>> divergence_free_residuals;
  std::vector<double> residual_scales;
  std::vector<EllipticityEstimate> ellipticity_bounds;
  std::vector<std::string> warnings;
  bool passed = true;
};

ValidationReport check_divergence_free(const Model& m, int n_test_functions, double tol);

// Sampled invariants: phi > 0, ellipticity, bounded exhausting sublevel sets.
ValidationReport validate_model(const Model& m);

nlohmann::json to_json(const ValidationReport& r);

// Halton point with the given index in [0,1)^d.
void halton(std::uint64_t index, int d, double* out);

}  // namespace rtd::model
