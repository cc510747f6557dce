#include "rtd/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rtd/criteria.hpp"
#include "rtd/discrete_lab.hpp"
#include "rtd/errors.hpp"
#include "rtd/montecarlo.hpp"
#include "rtd/scale_1d.hpp"
#include "rtd/volume_growth.hpp"

namespace rtd::cli {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& kind, const std::string& msg) { throw Error("cli", kind, msg); }

const std::set<std::string> kCommands{"classify", "volume", "chi", "lab", "simulate", "validate"};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

double r_max_of(const RunConfig& cfg, const model::Model& m) {
  if (cfg.rmax) return *cfg.rmax;
  return m.spec().r_max.value_or(1e4);
}

volume::Options volume_options(const RunConfig& cfg) {
  volume::Options o;
  if (cfg.tol) o.quad.rel_tol = *cfg.tol;
  return o;
}

bool drift_free(const model::Model& m) {
  for (int i = 0; i < m.dim(); ++i) {
    const auto& e = m.b_expr(i);
    if (!e.is_constant() || e.constant_value() != 0.0) return false;
  }
  return true;
}

bool irreducible_of(const RunConfig& cfg, const model::Model& m) {
  return cfg.irreducible || m.spec().irreducible.value_or(false);
}

std::vector<double> chi_n_list(const RunConfig& cfg, double r_max) {
  if (!cfg.n_list.empty()) return cfg.n_list;
  std::vector<double> out;
  for (double n : {10.0, 100.0, 1000.0, 10000.0})
    if (n <= r_max) out.push_back(n);
  return out;
}

void write_text(const std::string& dir, const std::string& name, const std::string& text) {
  std::ofstream os(std::filesystem::path(dir) / name, std::ios::binary);
  if (!os) fail("IoError", "cannot write " + name + " in " + dir);
  os << text;
}

struct Outputs {
  std::string profiles_csv, ensemble_csv;
};

// classify in d >= 2 (and for 1-d models outside the generic form).
json classify_general(const RunConfig& cfg, const model::Model& m, Outputs& out, criteria::Classification& merged) {
  const double r_max = r_max_of(cfg, m);
  const auto opt = volume_options(cfg);
  const auto prof = volume::build_profiles_on(m, volume::default_grid(r_max), opt);
  std::ostringstream csv;
  volume::write_profiles_csv(csv, prof);
  out.profiles_csv = csv.str();
  const auto a = volume::compute_a(prof.v, volume::default_n_list(r_max));
  std::vector<criteria::Classification> parts;
  json skipped = json::array();
  auto attempt = [&](const std::string& id, auto&& f) {
    try {
      parts.push_back(f());
    } catch (const Error& e) {
      if (e.kind() == "TailMismatch") throw;
      skipped.push_back({{"test", id}, {"code", e.code()}, {"message", e.what()}});
    }
  };
  attempt("recurrence_volume", [&] {
    return criteria::test_recurrence_volume(prof.v, prof.v2, a, irreducible_of(cfg, m), {}, m.spec().irreducible_note);
  });
  attempt("growth_bounds", [&] { return criteria::test_growth_bounds(prof.v1, prof.v2, prof.v); });
  if (drift_free(m)) {
    attempt("transience_symmetric", [&] {
      criteria::TailDeclaration decl;
      decl.law = m.spec().tail_law;
      decl.heat_kernel_bounds = m.spec().assumptions.heat_kernel_bounds;
      return criteria::test_transience_symmetric(prof.v1, decl);
    });
  } else {
    skipped.push_back({{"test", "transience_symmetric"}, {"code", "cli.NotApplicable"}, {"message", "needs B = 0"}});
  }
  merged = criteria::merge(parts);
  return {{"pipeline", "volume"}, {"skipped", skipped}, {"r_max", r_max}};
}

json do_classify(const RunConfig& cfg, const model::Model& m, Outputs& out, int& exit_code) {
  json r;
  const auto val = model::validate_model(m);
  r["validation"] = model::to_json(val);
  criteria::Classification c;
  bool done = false;
  if (m.dim() == 1) {
    try {
      scale1d::Classify1DOptions o;
      o.n_max = r_max_of(cfg, m);
      o.volume = volume_options(cfg);
      const auto res = scale1d::classify_1d(m, o);
      c = res.classification;
      r["pipeline"] = "scale_1d";
      r["scale_1d"] = scale1d::to_json(res.scale);
      r["volume_test"] = criteria::to_json(res.volume_test);
      done = true;
    } catch (const Error& e) {
      if (e.code() != "scale_1d.UnsupportedModel") throw;
      r["scale_1d_skipped"] = e.what();
    }
  }
  if (!done) r.update(classify_general(cfg, m, out, c));
  r["classification"] = criteria::to_json(c);
  r["verdict"] = criteria::to_string(c.verdict);
  exit_code = c.verdict == criteria::Verdict::Inconclusive ? 2 : 0;
  return r;
}

json do_volume(const RunConfig& cfg, const model::Model& m, Outputs& out) {
  const double r_max = r_max_of(cfg, m);
  const auto prof = volume::build_profiles_on(m, volume::default_grid(r_max), volume_options(cfg));
  std::ostringstream csv;
  volume::write_profiles_csv(csv, prof);
  out.profiles_csv = csv.str();
  const auto a = volume::compute_a(prof.v, cfg.n_list.empty() ? volume::default_n_list(r_max) : cfg.n_list);
  json r{{"r_max", r_max}, {"n", a.n}, {"a", a.a}, {"radial_spot_check", volume::radial_spot_check(m)}};
  if (a.has_fit) {
    const auto& g = a.tail_fit;
    r["a_tail_fit"] = {{"law", fit::to_string(g.kind)}, {"c0", g.c0}, {"c1", g.c1}, {"p", g.p}, {"r2", g.r2}};
  }
  return r;
}

json do_chi(const RunConfig& cfg, const model::Model& m, Outputs& out) {
  const double r_max = r_max_of(cfg, m);
  const auto opt = volume_options(cfg);
  const auto prof = volume::build_profiles_on(m, volume::default_grid(r_max), opt);
  std::ostringstream csv;
  volume::write_profiles_csv(csv, prof);
  out.profiles_csv = csv.str();
  const auto ns = chi_n_list(cfg, r_max);
  const auto a = volume::compute_a(prof.v, ns);
  auto chi = criteria::build_chi_sequence(prof.v, prof.v2, a, ns);
  json entries = json::array();
  for (double n : ns) {
    const auto e = criteria::energy_of_chi(m, chi, n, 1e-3, opt);
    entries.push_back({{"n", n},
                       {"a_n", chi.at(n).a_n},
                       {"b_n", e.b_n},
                       {"e_n", e.e_n},
                       {"symmetric", e.symmetric},
                       {"drift", e.drift},
                       {"within_bound", e.within_bound}});
  }
  json witness = json::array();
  for (double n : ns) {
    const auto w = criteria::lipschitz_cutoff_energy(m, n, opt);
    witness.push_back({{"n", w.n}, {"max_slope", w.max_slope}, {"symmetric", w.symmetric}, {"drift", w.drift},
                       {"energy", w.energy}});
  }
  return {{"r_max", r_max}, {"chi", entries}, {"cutoff_witness", witness}};
}

json do_lab(const RunConfig& cfg, const model::Model& m) {
  lab::LabOptions o;
  o.cells = cfg.grid;
  o.extent = cfg.extent;
  o.seed = cfg.seed;
  const auto rep = lab::run_lab(m, o);
  json r = lab::to_json(rep);
  r["max_residual"] = rep.max_residual();
  return r;
}

json do_simulate(const RunConfig& cfg, const model::Model& m, Outputs& out) {
  const auto sde = mc::derive_sde(m);
  const int d = m.dim();
  mc::SimOptions o;
  o.T = cfg.horizon;
  o.dt = cfg.dt;
  o.n_paths = cfg.paths;
  o.seed = cfg.seed;
  o.threads = cfg.threads;
  o.adaptive = cfg.adaptive;
  o.blowup_radius = cfg.blowup_radius;
  o.dump_paths = cfg.dump_paths;
  mc::Target target;
  target.center = cfg.target_center.empty() ? std::vector<double>(static_cast<std::size_t>(d), 0.0) : cfg.target_center;
  target.radius = cfg.target_radius;
  o.target = target;
  const std::vector<double> x0 = cfg.x0.empty() ? std::vector<double>(static_cast<std::size_t>(d), 0.0) : cfg.x0;
  std::vector<double> ladder = cfg.ladder;
  if (ladder.empty()) ladder = {0.0, 1e-3 * cfg.horizon, 1e-2 * cfg.horizon, 1e-1 * cfg.horizon, cfg.horizon};
  const auto e = mc::simulate(sde, x0, o);
  const auto rec = mc::recurrence_statistics(e, ladder);
  const auto life = mc::lifetime_statistics(e, ladder);
  std::ostringstream csv;
  mc::write_ensemble_csv(csv, rec.revisit);
  out.ensemble_csv = csv.str();
  json flags = json::array();
  long exploded = 0;
  for (const auto& p : e.paths) exploded += p.exploded;
  json r{{"x0", x0},
         {"target", {{"center", target.center}, {"radius", target.radius}}},
         {"ladder", ladder},
         {"recurrence", mc::to_json(rec)},
         {"lifetime", mc::to_json(life)},
         {"exploded_paths", exploded},
         {"sde_constant_coefficients", sde.constant}};
  if (cfg.halving) {
    const auto h = mc::step_halving_check(sde, x0, o, ladder);
    r["step_halving"] = {{"max_shift_sigma", h.max_shift_sigma}, {"consistent", h.consistent}};
  }
  if (cfg.dump_paths > 0 && !cfg.out_dir.empty()) {
    std::ostringstream os;
    mc::write_paths(os, e);
    write_text(cfg.out_dir, "paths.txt", os.str());
  }
  return r;
}

json do_validate(const model::Model& m, int& exit_code) {
  const auto rep = model::validate_model(m);
  exit_code = rep.passed ? 0 : 1;
  return model::to_json(rep);
}

}  // namespace

void validate_config(const RunConfig& cfg) {
  if (!kCommands.count(cfg.command)) fail("ConfigError", "unknown command '" + cfg.command + "'");
  if (cfg.builtin.has_value() == cfg.config_path.has_value())
    fail("ConfigError", "exactly one of --builtin and --config is required");
  if (cfg.config_path && !cfg.params.empty()) fail("ConfigError", "--param applies to built-in models only");
  if (cfg.tol && !(*cfg.tol > 0)) fail("ConfigError", "tolerances must be positive");
  if (cfg.rmax && !(*cfg.rmax > 1)) fail("ConfigError", "--rmax must exceed 1");
  for (double n : cfg.n_list)
    if (!(n >= 1)) fail("ConfigError", "n values must be >= 1");
  if (cfg.grid < 0 || !(cfg.extent > 0)) fail("ConfigError", "grid size and extent must be positive");
  if (cfg.paths < 1 || !(cfg.dt > 0) || !(cfg.horizon > 0) || !(cfg.target_radius > 0) || !(cfg.blowup_radius > 0))
    fail("ConfigError", "simulation parameters must be positive");
  if (cfg.threads < 1) fail("ConfigError", "--threads must be >= 1");
}

model::Model load_model(const RunConfig& cfg) {
  if (cfg.builtin) return model::builtin_model(*cfg.builtin, cfg.params);
  std::ifstream is(*cfg.config_path);
  if (!is) fail("ConfigError", "cannot open " + *cfg.config_path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    fail("ConfigError", std::string("malformed JSON: ") + e.what());
  }
  return model::Model(model::spec_from_json(j));
}

json config_to_json(const RunConfig& cfg) {
  json j{{"command", cfg.command},
         {"params", cfg.params},
         {"seed", cfg.seed},
         {"n_list", cfg.n_list},
         {"irreducible", cfg.irreducible},
         {"fixed_clock", cfg.fixed_clock}};
  if (cfg.builtin) j["builtin"] = *cfg.builtin;
  if (cfg.config_path) j["config"] = *cfg.config_path;
  if (cfg.tol) j["tol"] = *cfg.tol;
  if (cfg.rmax) j["rmax"] = *cfg.rmax;
  if (cfg.command == "lab") {
    j["grid"] = cfg.grid;
    j["extent"] = cfg.extent;
  }
  if (cfg.command == "simulate") {
    j["paths"] = cfg.paths;
    j["dt"] = cfg.dt;
    j["horizon"] = cfg.horizon;
    j["x0"] = cfg.x0;
    j["target_center"] = cfg.target_center;
    j["target_radius"] = cfg.target_radius;
    j["ladder"] = cfg.ladder;
    j["threads"] = cfg.threads;
    j["adaptive"] = cfg.adaptive;
    j["halving"] = cfg.halving;
    j["blowup_radius"] = cfg.blowup_radius;
  }
  return j;
}

std::string config_hash(const json& canonical) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunResult run(const RunConfig& cfg) {
  RunResult res;
  const auto t0 = std::chrono::steady_clock::now();
  const json canonical = config_to_json(cfg);
  json& rep = res.report;
  rep["tool"] = "rtd";
  rep["version"] = kVersion;
  rep["command"] = cfg.command;
  rep["config"] = canonical;
  rep["config_hash"] = config_hash(canonical);
  rep["generated_at"] = cfg.fixed_clock ? "1970-01-01T00:00:00Z" : utc_now();
  Outputs out;
  try {
    validate_config(cfg);
    const model::Model m = load_model(cfg);
    rep["model"] = model::spec_to_json(m.spec());
    int code = 0;
    if (cfg.command == "classify")
      rep["result"] = do_classify(cfg, m, out, code);
    else if (cfg.command == "volume")
      rep["result"] = do_volume(cfg, m, out);
    else if (cfg.command == "chi")
      rep["result"] = do_chi(cfg, m, out);
    else if (cfg.command == "lab")
      rep["result"] = do_lab(cfg, m);
    else if (cfg.command == "simulate")
      rep["result"] = do_simulate(cfg, m, out);
    else
      rep["result"] = do_validate(m, code);
    res.exit_code = code;
  } catch (const Error& e) {
    rep["error"] = {{"code", e.code()}, {"message", e.what()}};
    res.exit_code = 1;
  } catch (const std::exception& e) {
    rep["error"] = {{"code", "cli.InternalError"}, {"message", e.what()}};
    res.exit_code = 1;
  }
  rep["exit_code"] = res.exit_code;
  if (!cfg.fixed_clock)
    rep["elapsed_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    write_text(cfg.out_dir, "report.json", rep.dump(2) + "\n");
    if (!out.profiles_csv.empty()) write_text(cfg.out_dir, "profiles.csv", out.profiles_csv);
    if (!out.ensemble_csv.empty()) write_text(cfg.out_dir, "ensemble.csv", out.ensemble_csv);
  }
  return res;
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Recurrence and transience diagnostics for non-symmetric diffusions"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  RunConfig cfg;
  std::string builtin, config_path;
  std::vector<std::string> params;
  double tol = 0, rmax = 0;
  auto common = [&](CLI::App* sub) {
    auto* b = sub->add_option("--builtin", builtin, "built-in model name");
    auto* c = sub->add_option("--config", config_path, "model config (JSON)")->check(CLI::ExistingFile);
    b->excludes(c);
    sub->add_option("--param", params, "model parameter k=v (repeatable)");
    sub->add_option("--out", cfg.out_dir, "output directory");
    sub->add_option("--seed", cfg.seed, "random seed");
    sub->add_option("--tol", tol, "relative quadrature tolerance");
    sub->add_option("--rmax", rmax, "largest radius / n");
    sub->add_option("--n-list", cfg.n_list, "explicit n values")->delimiter(',');
    sub->add_flag("--irreducible", cfg.irreducible, "assert irreducibility");
    sub->add_flag("--fixed-clock", cfg.fixed_clock, "omit wall-clock data from reports");
  };
  for (const std::string name : {"classify", "volume", "chi", "validate"}) common(app.add_subcommand(name));
  auto* lab = app.add_subcommand("lab", "finite-grid verification suite");
  common(lab);
  lab->add_option("--grid", cfg.grid, "cells per axis");
  lab->add_option("--extent", cfg.extent, "half-width of the box");
  auto* sim = app.add_subcommand("simulate", "Euler-Maruyama ensemble");
  common(sim);
  sim->add_option("--paths", cfg.paths, "number of paths");
  sim->add_option("--dt", cfg.dt, "time step");
  sim->add_option("--horizon,-T", cfg.horizon, "time horizon");
  sim->add_option("--x0", cfg.x0, "start point")->delimiter(',');
  sim->add_option("--target-center", cfg.target_center, "centre of the target ball")->delimiter(',');
  sim->add_option("--target-radius", cfg.target_radius, "radius of the target ball");
  sim->add_option("--ladder", cfg.ladder, "ladder times")->delimiter(',');
  sim->add_option("--threads", cfg.threads, "worker threads");
  sim->add_option("--blowup-radius", cfg.blowup_radius, "explosion radius");
  sim->add_option("--dump-paths", cfg.dump_paths, "write this many full paths to paths.txt");
  sim->add_flag("--adaptive", cfg.adaptive, "far-field step control (constant coefficients)");
  sim->add_flag("--halving", cfg.halving, "repeat with dt/2 and compare");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  for (auto* sub : app.get_subcommands()) cfg.command = sub->get_name();
  if (!builtin.empty()) cfg.builtin = builtin;
  if (!config_path.empty()) cfg.config_path = config_path;
  if (tol != 0) cfg.tol = tol;
  if (rmax != 0) cfg.rmax = rmax;
  try {
    for (const auto& kv : params) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) fail("ConfigError", "--param expects k=v, got '" + kv + "'");
      std::size_t used = 0;
      const std::string val = kv.substr(eq + 1);
      double v = 0;
      try {
        v = std::stod(val, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0 || used != val.size()) fail("ConfigError", "non-numeric value in --param '" + kv + "'");
      cfg.params[kv.substr(0, eq)] = v;
    }
  } catch (const Error& e) {
    std::cerr << e.code() << ": " << e.what() << '\n';
    return 1;
  }
  const RunResult r = run(cfg);
  if (cfg.out_dir.empty()) {
    std::cout << r.report.dump(2) << '\n';
  } else {
    std::cout << cfg.command;
    if (r.report.contains("result") && r.report["result"].contains("verdict"))
      std::cout << ": " << r.report["result"]["verdict"].get<std::string>();
    if (r.report.contains("error")) std::cout << ": " << r.report["error"]["code"].get<std::string>();
    std::cout << " (report in " << cfg.out_dir << "/report.json)\n";
  }
  return r.exit_code;
}

}  // namespace rtd::cli
