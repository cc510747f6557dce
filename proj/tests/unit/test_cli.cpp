#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "rtd/cli.hpp"
#include "support/error_code.hpp"

namespace cli = rtd::cli;
namespace fs = std::filesystem;

namespace {
std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}
cli::RunConfig classify(const std::string& builtin) {
  cli::RunConfig c;
  c.command = "classify";
  c.builtin = builtin;
  c.fixed_clock = true;
  return c;
}
}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("config validation") {
    auto c = classify("bm-2");
    c.tol = -1.0;
    CHECK(rtd::testing::error_code([&] { cli::validate_config(c); }) == "cli.ConfigError");
    auto d = classify("bm-2");
    d.config_path = "x.json";
    CHECK(rtd::testing::error_code([&] { cli::validate_config(d); }) == "cli.ConfigError");
    auto e = classify("bm-2");
    e.command = "plot";
    CHECK(rtd::testing::error_code([&] { cli::validate_config(e); }) == "cli.ConfigError");
  }

  TEST_CASE("config hash") {
    const auto a = cli::config_to_json(classify("bm-2"));
    CHECK(cli::config_hash(a) == cli::config_hash(cli::config_to_json(classify("bm-2"))));
    CHECK(cli::config_hash(a) != cli::config_hash(cli::config_to_json(classify("bm-3"))));
    CHECK(cli::config_hash(a).size() == 16);
  }

  TEST_CASE("exit codes") {
    const auto ok = cli::run(classify("bm-2"));
    CHECK(ok.exit_code == 0);
    CHECK(ok.report["result"]["verdict"] == "Recurrent");
    CHECK(ok.report["version"] == cli::kVersion);
    // eta >= d: no heat kernel bounds, no volume criterion applies.
    auto pw = classify("power-weight");
    pw.params = {{"eta", 3.0}};
    const auto inc = cli::run(pw);
    CHECK(inc.exit_code == 2);
    auto bad = classify("bm-2");
    bad.builtin.reset();
    bad.config_path = std::string(RTD_TEST_DATA_DIR) + "/unknown_key.json";
    const auto err = cli::run(bad);
    CHECK(err.exit_code == 1);
    CHECK(err.report["error"]["code"] == "model.UnknownKey");
  }

  TEST_CASE("config file models") {
    auto c = classify("");
    c.builtin.reset();
    c.config_path = std::string(RTD_TEST_DATA_DIR) + "/generic_min.json";
    const auto r = cli::run(c);
    CHECK(r.exit_code == 0);
    CHECK(r.report["result"]["verdict"] == "NotRecurrent");
  }

  TEST_CASE("reports are byte-identical under a fixed clock") {
    const fs::path base = fs::temp_directory_path() / "rtd_cli_test";
    fs::remove_all(base);
    for (const char* cmd : {"classify", "volume", "simulate"}) {
      cli::RunConfig c = classify("bm-1");
      c.command = cmd;
      c.paths = 200;
      c.horizon = 1.0;
      c.dt = 1e-2;
      c.out_dir = (base / "a").string();
      cli::run(c);
      c.out_dir = (base / "b").string();
      cli::run(c);
      CHECK(slurp(base / "a" / "report.json") == slurp(base / "b" / "report.json"));
    }
    CHECK(fs::exists(base / "a" / "profiles.csv"));
    CHECK(slurp(base / "a" / "ensemble.csv").rfind("t,hits,n,p_hat,ci_low,ci_high", 0) == 0);
    fs::remove_all(base);
  }
}
