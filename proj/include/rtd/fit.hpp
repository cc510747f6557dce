#pragma once

#include <span>
#include <string>

namespace rtd::fit {

struct LinearFit {
  double intercept = 0.0;
  double slope = 0.0;
  double r2 = 0.0;
  double sse = 0.0;
};

// Ordinary least squares y ~ intercept + slope * x.
LinearFit linear(std::span<const double> x, std::span<const double> y);

enum class LawKind { Log, Power, Bounded };

std::string to_string(LawKind k);

// a(n) ~ c0 + c1 log n  |  c0 + c1 n^p  |  c0 - c1 n^-p, with p in [0.05, 4].
struct GrowthLaw {
  LawKind kind = LawKind::Log;
  double c0 = 0.0;
  double c1 = 0.0;
  double p = 0.0;
  double r2 = 0.0;
  double sse = 0.0;

  double operator()(double n) const;
  bool unbounded() const;
};

GrowthLaw fit_law(LawKind kind, std::span<const double> n, std::span<const double> a);
// Best of the three laws by residual sum of squares.
GrowthLaw fit_growth_law(std::span<const double> n, std::span<const double> a);

}  // namespace rtd::fit
