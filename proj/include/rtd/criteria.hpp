#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtd/model.hpp"
#include "rtd/volume_growth.hpp"

namespace rtd::criteria {

enum class Verdict { Transient, Recurrent, NotTransient, NotRecurrent, Inconclusive };
std::string to_string(Verdict v);

struct Classification {
  Verdict verdict = Verdict::Inconclusive;
  std::string criterion_id;
  nlohmann::json diagnostics = nlohmann::json::object();
  std::vector<std::string> assumptions;
};

nlohmann::json to_json(const Classification& c);

// Finite-data acceptance rules for the limit statements.
struct Thresholds {
  double r2_min = 0.999;
  double ratio_limit = 0.01;
  double alpha_margin = 0.05;
  double exponent_tol = 1e-3;
  double tail_rel_tol = 0.05;
  double gamma_margin = 0.05;
  int min_tail_points = 16;
};

nlohmann::json to_json(const Thresholds& t);

Classification test_recurrence_volume(const volume::GrowthProfile& v, const volume::GrowthProfile& v2,
                                      const volume::ASequence& a, bool irreducible, const Thresholds& th = {},
                                      const std::string& irreducible_note = {});

Classification test_growth_bounds(const volume::GrowthProfile& v1, const volume::GrowthProfile& v2,
                                  const volume::GrowthProfile& v, const Thresholds& th = {});

// Either a declared power law v1 ~ C r^gamma, a lower comparison bound
// v1(r) >= C r^gamma for r >= r0, or neither (fit from the profile tail).
struct TailDeclaration {
  std::optional<model::TailLaw> law;
  struct LowerBound {
    double r0 = 1.0;
    double C = 0.0;
    double gamma = 0.0;
  };
  std::optional<LowerBound> lower_bound;
  bool heat_kernel_bounds = false;
};

Classification test_transience_symmetric(const volume::GrowthProfile& v1, const TailDeclaration& decl,
                                         const Thresholds& th = {});

struct ChiEntry {
  double n = 0.0;
  double a_n = 0.0;
  double b_n = 0.0;
  double e_n = -1.0;  // negative until measured
};

// Cutoffs chi_n = psi_n(rho) built from the volume profile.
class ChiSequence {
 public:
  ChiSequence(volume::GrowthProfile v, volume::GrowthProfile v2, std::vector<ChiEntry> entries);

  const std::vector<ChiEntry>& entries() const { return entries_; }
  std::vector<ChiEntry>& entries() { return entries_; }
  const ChiEntry& at(double n) const;
  ChiEntry& at(double n);
  const volume::GrowthProfile& v() const { return v_; }
  const volume::GrowthProfile& v2() const { return v2_; }

  double psi(double n, double r) const;
  // psi_n'(r) = -(1/a_n) r / v(r) on (1, n), zero elsewhere.
  double dpsi(double n, double r) const;

 private:
  volume::GrowthProfile v_, v2_;
  std::vector<ChiEntry> entries_;
};

ChiSequence build_chi_sequence(const volume::GrowthProfile& v, const volume::GrowthProfile& v2,
                               const volume::ASequence& a, const std::vector<double>& n_list);

struct EnergyResult {
  double n = 0.0;
  double symmetric = 0.0;  // int <A grad chi, grad chi> dmu
  double drift = 0.0;      // int |<B, grad chi>| dmu
  double e_n = 0.0;
  double b_n = 0.0;
  bool within_bound = true;
};

// Measures e_n, stores it in `chi` and checks e_n <= b_n (1 + tol).
EnergyResult energy_of_chi(const model::Model& m, ChiSequence& chi, double n, double tol = 1e-3,
                           const volume::Options& opt = {});

// Smooth step S on [0,1] with S(0)=0, S(1)=1 and max slope 2.
double smooth_step(double t);
double smooth_step_slope(double t);

// Cutoff chi_n = 1 - S((rho - n)/n): equal to 1 on E_n, 0 outside E_{2n}.
struct CutoffWitness {
  double n = 0.0;
  double max_slope = 0.0;  // sup |d chi_n / d rho|, sampled
  double symmetric = 0.0;  // E0(chi, chi)
  double drift = 0.0;      // int <B, grad chi> chi dmu (vanishes for divergence-free B)
  double energy = 0.0;     // E(chi, chi) = E0 - drift
};

CutoffWitness lipschitz_cutoff_energy(const model::Model& m, double n, const volume::Options& opt = {});

// Combines verdicts: Transient with NotTransient/Recurrent, or NotRecurrent
// with Recurrent, is criteria.InconsistentVerdicts.
Classification merge(const std::vector<Classification>& parts);

}  // namespace rtd::criteria
