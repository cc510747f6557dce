#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtd/model.hpp"

namespace rtd::cli {

inline constexpr const char* kVersion = "0.1.0";

struct RunConfig {
  std::string command;  // classify | volume | chi | lab | simulate | validate
  std::optional<std::string> builtin;
  std::optional<std::string> config_path;
  std::map<std::string, double> params;
  std::string out_dir;  // empty: no files written
  std::uint64_t seed = 1;
  std::optional<double> tol;
  std::optional<double> rmax;
  std::vector<double> n_list;
  bool irreducible = false;
  bool fixed_clock = false;
  // lab
  int grid = 0;
  double extent = 5.0;
  // simulate
  int paths = 10000;
  double dt = 1e-3;
  double horizon = 100.0;
  std::vector<double> x0;
  std::vector<double> target_center;
  double target_radius = 1.0;
  std::vector<double> ladder;
  int threads = 1;
  bool adaptive = false;
  bool halving = false;
  int dump_paths = 0;
  double blowup_radius = 1e6;
};

struct RunResult {
  int exit_code = 0;
  nlohmann::json report;
};

// Throws rtd::Error("cli", ...) for invalid configurations.
void validate_config(const RunConfig& cfg);
model::Model load_model(const RunConfig& cfg);

nlohmann::json config_to_json(const RunConfig& cfg);
// FNV-1a 64 of the canonical config JSON, as 16 hex digits.
std::string config_hash(const nlohmann::json& canonical);

// Runs one command, writes report.json (plus profiles.csv / ensemble.csv) to
// out_dir when set. Module errors become exit code 1 with their code in the report.
RunResult run(const RunConfig& cfg);

// Parses argv with CLI11 and dispatches to run().
int main_entry(int argc, char** argv);

}  // namespace rtd::cli
