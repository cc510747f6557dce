#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtd/model.hpp"

namespace rtd::mc {

// dX = b(X) dt + sigma(X) dW with sigma sigma^T = 2 a~.
struct SDECoefficients {
  int dim = 1;
  std::function<void(const double*, double*)> drift;      // b(x), length d
  std::function<void(const double*, double*)> diffusion;  // a~(x), d x d row-major
  std::function<bool(const double*)> valid;
  bool constant = false;
  double noise_max = 0.0;  // largest eigenvalue of 2 a~ when constant
};

SDECoefficients derive_sde(const model::Model& m);
// Constant drift b and sigma sigma^T = s^2 I.
SDECoefficients constant_sde(int d, const std::vector<double>& b, double s);

// Lower Cholesky factor of 2 a~(x); false when not positive semidefinite.
bool sigma_factor(const SDECoefficients& sde, const double* x, double* sigma);

struct Target {
  std::vector<double> center;
  double radius = 1.0;
};

struct SimOptions {
  double T = 1.0;
  double dt = 1e-3;
  int n_paths = 10000;
  std::uint64_t seed = 1;
  double blowup_radius = 1e6;
  std::optional<Target> target;
  int threads = 1;
  // Far-field steps h = max(dt, (kappa * dist)^2 / noise) for constant coefficients.
  bool adaptive = false;
  double kappa = 0.2;
  double exit_radius = 0.0;  // 0 disables the E_R flag
  int dump_paths = 0;        // number of full paths kept for text output
};

struct PathRecord {
  double first_hit = INFINITY;
  double last_visit = -INFINITY;
  double explosion_time = INFINITY;
  bool exploded = false;
  bool outside_exit_radius = false;
  model::Point final{0.0, 0.0, 0.0};
  std::uint64_t steps = 0;
};

struct PathEnsemble {
  int dim = 1;
  std::vector<double> x0;
  SimOptions options;
  std::vector<PathRecord> paths;
  std::vector<std::vector<std::vector<double>>> dumps;  // (t, x1..xd) rows
};

// Per-path seeding: stream i uses splitmix64(seed, i).
std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path);

PathEnsemble simulate(const SDECoefficients& sde, const std::vector<double>& x0, const SimOptions& opt);

struct LadderPoint {
  double t = 0.0;
  long hits = 0;
  long n = 0;
  double p_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// Wilson score interval with z standard deviations.
LadderPoint wilson(double t, long hits, long n, double z = 3.0);

struct RecurrenceReport {
  std::vector<LadderPoint> revisit;  // visits to the target during [t, T]
  std::vector<LadderPoint> hit;      // first hit by time t
  std::string hint;
  std::string scope_note;
};

// Throws montecarlo.InsufficientPaths below 100 paths.
RecurrenceReport recurrence_statistics(const PathEnsemble& e, const std::vector<double>& t_ladder);

struct LifetimeReport {
  std::vector<LadderPoint> exploded;  // exploded by time t
  std::string hint;
};

LifetimeReport lifetime_statistics(const PathEnsemble& e, const std::vector<double>& buckets);

struct HalvingReport {
  double max_shift_sigma = 0.0;
  bool consistent = true;
  std::vector<LadderPoint> coarse, fine;
};

// Repeats the run with dt / 2 and compares every ladder fraction.
HalvingReport step_halving_check(const SDECoefficients& sde, const std::vector<double>& x0, const SimOptions& opt,
                                 const std::vector<double>& t_ladder);

nlohmann::json to_json(const LadderPoint& p);
nlohmann::json to_json(const RecurrenceReport& r);
nlohmann::json to_json(const LifetimeReport& r);

void write_ensemble_csv(std::ostream& os, const std::vector<LadderPoint>& pts);
void write_paths(std::ostream& os, const PathEnsemble& e);

}  // namespace rtd::mc
