#pragma once

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtd/criteria.hpp"
#include "rtd/model.hpp"

namespace rtd::scale1d {

struct Options {
  double rel_tol = 1e-12;      // per-segment quadrature of the log-derivative
  double x_max = 1e4;          // tabulation range on each half-line
  double log_cap = 1e4;        // tabulation stops once |log phi~| exceeds this
  double value_rel_tol = 1e-9; // accuracy target for the half-line integrals
  double tail_rel_tol = 0.05;  // validation error allowed for a fitted tail law
  double exponent_margin = 0.05;
  double exponent_tol = 1e-3;
};

using Fn = std::function<double(double)>;

// phi~(x) = exp(int_0^x (phi' + b/a)/phi ds), tabulated on a node grid and
// refined by quadrature from the nearest node. Immutable after construction.
class SymmetrizedDensity {
 public:
  SymmetrizedDensity(Fn phi, Fn dphi, double b, double a = 0.5, std::vector<double> kinks = {}, Options opt = {});

  double b() const { return b_; }
  double a() const { return a_; }
  double log_derivative(double x) const;
  // log phi~(x). Returns +-infinity beyond a side whose tabulation hit log_cap.
  double log_value(double x) const;
  double operator()(double x) const;
  // Largest |x| covered by the tabulation on side +1 or -1.
  double resolved_limit(int side) const;
  // True when the tabulation on `side` stopped because |log phi~| exceeded log_cap.
  bool capped(int side) const;
  const Options& options() const { return opt_; }

  void write_csv(std::ostream& os, double x_lo, double x_hi, int n) const;

 private:
  struct Side {
    std::vector<double> t;  // |x| nodes, t[0] = 0
    std::vector<double> L;  // log phi~ at side * t
    bool capped = false;
  };
  const Side& side(int s) const { return s > 0 ? plus_ : minus_; }
  double segment(double x0, double x1) const;
  Fn phi_, dphi_;
  double b_, a_;
  std::vector<double> kinks_;
  Options opt_;
  Side plus_, minus_;
};

enum class TailStatus { Convergent, Divergent, Unresolved };
std::string to_string(TailStatus s);

struct HalfLine {
  int side = 1;
  TailStatus status = TailStatus::Unresolved;
  double value = 0.0;  // infinity when divergent
  double error = 0.0;
  double cutoff = 0.0;
  double partial = 0.0;  // int over [0, cutoff]
  std::string certificate;
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const HalfLine& h);

struct Scale1DResult {
  std::shared_ptr<const SymmetrizedDensity> density;
  HalfLine plus, minus;
  criteria::Verdict verdict = criteria::Verdict::Inconclusive;
};

nlohmann::json to_json(const Scale1DResult& r);

std::shared_ptr<const SymmetrizedDensity> symmetrize_density(Fn phi, Fn dphi, double b, double a = 0.5,
                                                             std::vector<double> kinks = {}, const Options& opt = {});

// Decides int 1/phi~ on each half-line. Throws scale_1d.TailUnresolved when
// neither half-line is certified.
Scale1DResult test_not_recurrent_1d(std::shared_ptr<const SymmetrizedDensity> density);

HalfLine half_line_integral(const SymmetrizedDensity& density, int side);

struct Classify1DOptions {
  Options scale;
  double n_max = 1e4;
  int per_decade = 24;
  criteria::Thresholds thresholds;
  volume::Options volume;
};

struct Generic1D {
  double b = 0.0;
  double a = 0.0;
};

// Reads b = phi * B (constant) and the constant scalar A from a 1-d model.
Generic1D generic_form(const model::Model& m);

std::shared_ptr<const SymmetrizedDensity> symmetrize_model(const model::Model& m, const Options& opt = {});

struct Classify1DResult {
  criteria::Classification classification;
  Scale1DResult scale;
  criteria::Classification volume_test;
};

Classify1DResult classify_1d(const model::Model& m, const Classify1DOptions& opt = {});

}  // namespace rtd::scale1d
