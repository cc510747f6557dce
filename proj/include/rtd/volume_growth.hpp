#pragma once

#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "rtd/fit.hpp"
#include "rtd/model.hpp"
#include "rtd/quadrature.hpp"

namespace rtd::volume {

enum class Kind { V1, V2, V };
std::string to_string(Kind k);

enum class Method { Auto, Radial, Full };

struct Options {
  quad::Options quad;
  Method method = Method::Auto;
  // Radius of the ball removed around declared singular points.
  double excision = 1e-8;
};

struct Estimate {
  double value = 0.0;
  double error = 0.0;
  double excised = 0.0;  // rough size of the removed ball's contribution
  bool radial = false;
};

using PointIntegrand = std::function<double(std::span<const double>)>;

// Integral of g over the shell {r_lo <= rho < r_hi} of the domain. Sublevel
// sets must be star-shaped about the origin. `radial_ok` permits the 1-d
// reduction when the model declares radial symmetry.
Estimate shell_integral(const model::Model& m, double r_lo, double r_hi, const PointIntegrand& g,
                        const Options& opt = {}, bool radial_ok = true);

// Pointwise integrands of v1 and v2.
double v1_density(const model::Model& m, std::span<const double> x);
double v2_density(const model::Model& m, std::span<const double> x);

Estimate eval_v1(const model::Model& m, double r, const Options& opt = {});
Estimate eval_v2(const model::Model& m, double r, const Options& opt = {});
Estimate eval_v(const model::Model& m, double r, const Options& opt = {});

// Spot check of the declared radial symmetry of phi, <A grad rho, grad rho>, |<B, grad rho>|.
bool radial_spot_check(const model::Model& m);

// Monotone volume-growth samples with a monotone piecewise-cubic interpolant
// (in log-log coordinates when every value is positive).
class GrowthProfile {
 public:
  GrowthProfile() = default;
  GrowthProfile(Kind kind, std::vector<double> radii, std::vector<double> values);

  Kind kind() const { return kind_; }
  const std::vector<double>& radii() const { return radii_; }
  const std::vector<double>& values() const { return values_; }
  double r_min() const { return radii_.front(); }
  double r_max() const { return radii_.back(); }
  // Smallest grid radius with a positive value (infinity if none).
  double positivity_threshold() const;
  // Stieltjes increments v(r_i) - v(r_{i-1}); the first entry is v(r_1).
  std::vector<double> increments() const;

  double operator()(double r) const;
  double derivative(double r) const;
  bool covers(double lo, double hi) const;

 private:
  void locate(double r, std::size_t& k, double& t, double& h) const;
  Kind kind_ = Kind::V;
  std::vector<double> radii_, values_;
  bool loglog_ = false;
  std::vector<double> X_, Y_, D_;
};

struct Profiles {
  GrowthProfile v1, v2, v;
};

std::vector<double> geometric_grid(double r_min, double r_max, int m);
// Grid with `per_decade` points per decade on [r_min, r_max], always containing 1.
std::vector<double> default_grid(double r_max, int per_decade = 24, double r_min = 0.5);

GrowthProfile build_profile(const model::Model& m, Kind kind, double r_max, int m_points, const Options& opt = {},
                            double r_min = 0.5);
GrowthProfile build_profile_on(const model::Model& m, Kind kind, const std::vector<double>& radii,
                               const Options& opt = {});
Profiles build_profiles_on(const model::Model& m, const std::vector<double>& radii, const Options& opt = {});

void write_profiles_csv(std::ostream& os, const Profiles& p);

struct ASequence {
  std::vector<double> n, a;
  bool has_fit = false;
  fit::GrowthLaw tail_fit;
};

ASequence compute_a(const GrowthProfile& v, std::vector<double> n_list);
// n values on [1, n_max] with `per_decade` points per decade.
std::vector<double> default_n_list(double n_max, int per_decade = 24);

struct MollifyResult {
  double n = 1.0;
  double rhs = 0.0;
  std::vector<double> eps, lhs, residual;
};

MollifyResult mollify_check(const GrowthProfile& v1, double n, const std::vector<double>& eps_list);

// Standard bump exp(-1/(1-u^2)) normalised to unit mass on (-1, 1).
double mollifier(double u);

}  // namespace rtd::volume
