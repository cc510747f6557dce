#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>

namespace rtd::quad {

struct Options {
  double rel_tol = 1e-7;
  double abs_tol = 0.0;
  std::size_t max_evals = 10'000'000;
};

struct Result {
  double value = 0.0;
  double error = 0.0;
  std::size_t evals = 0;
};

using Integrand = std::function<double(double)>;

// Globally adaptive Gauss-Kronrod (7/15) on [a, b]. Interior breakpoints seed
// the initial partition. Throws volume.NonFinite on a non-finite sample and
// volume.QuadratureFailure when the evaluation budget runs out.
Result integrate(const Integrand& f, double a, double b, const Options& opt = {},
                 std::span<const double> breakpoints = {});

using PointFn = std::function<double(std::span<const double>)>;
// Radial limits [s_lo, s_hi] along direction theta (unit vector).
using RayLimits = std::function<std::pair<double, double>(std::span<const double>)>;

// Integrates f over {c + s*theta : s_lo(theta) <= s <= s_hi(theta)} in polar
// coordinates (two rays for d = 1, d <= 3). Nested adaptive rules share one
// evaluation budget; inner rules run at a tenth of the outer tolerance.
Result integrate_spherical(int d, std::span<const double> center, const PointFn& f, const RayLimits& limits,
                           const Options& opt = {}, std::span<const double> radial_breaks = {});

// Pairwise summation with a fixed split topology.
double pairwise_sum(std::span<const double> v);

}  // namespace rtd::quad
