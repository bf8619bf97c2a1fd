#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "qls/grid.hpp"
#include "qls/runner.hpp"

using namespace qls;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("qls_runner_" + name);
  fs::remove_all(p);
  return p;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

RunOptions small(const std::string& sub, const fs::path& out) {
  RunOptions o;
  o.subcommand = sub;
  o.out_dir = out.string();
  o.overrides = {{"grid", {{"dim", 1}, {"L", 8.0}, {"N", 64}}}, {"verify", {{"rays", false}}}};
  return o;
}
}  // namespace

TEST_CASE("config resolution") {
  json d = default_config();
  CHECK(resolve_config(json::object()) == d);
  CHECK(resolve_config(json{{"grid", {{"N", 128}}}})["grid"]["N"] == 128);
  CHECK(resolve_config(json{{"grid", {{"N", 128}}}})["grid"]["L"] == 32.0);
  CHECK_THROWS_AS(resolve_config(json{{"grdi", 1}}), ConfigError);
  CHECK_THROWS_AS(resolve_config(json{{"grid", {{"N", "many"}}}}), ConfigError);
}

TEST_CASE("verify exits cleanly and writes the resolved config") {
  auto out = scratch("verify");
  std::ostringstream log, err;
  CHECK(run(small("verify", out), log, err) == 0);
  json r = read_json(out / "resolved_config.json");
  CHECK(r["subcommand"] == "verify");
  CHECK(r["grid"]["N"] == 64);
  CHECK(read_json(out / "verify.json").contains("pass"));
  fs::remove_all(out);
}

TEST_CASE("invalid configurations exit with 2") {
  auto out = scratch("bad");
  std::ostringstream log, err;
  RunOptions o = small("verify", out);
  o.overrides["unknown_block"] = 1;
  CHECK(run(o, log, err) == 2);
  CHECK(err.str().find("config error") != std::string::npos);
  RunOptions c = small("verify", out);
  c.overrides["coefficients"] = {{"name", "no-such-family"}};
  CHECK(run(c, log, err) == 2);
  RunOptions s = small("bogus", out);
  CHECK(run(s, log, err) == 2);
  fs::remove_all(out);
}

TEST_CASE("output directory precedence") {
  auto env_dir = scratch("env");
  auto cli_dir = scratch("cli");
  setenv("QLS_OUT_DIR", env_dir.c_str(), 1);
  std::ostringstream log, err;
  RunOptions o = small("rays", "");
  o.overrides["rays"] = {{"positions", 2}, {"directions", 2}};
  CHECK(run(o, log, err) == 0);
  CHECK(fs::exists(env_dir / "rays.json"));
  o.out_dir = cli_dir.string();
  CHECK(run(o, log, err) == 0);
  CHECK(fs::exists(cli_dir / "rays.csv"));
  unsetenv("QLS_OUT_DIR");
  fs::remove_all(env_dir);
  fs::remove_all(cli_dir);
}

TEST_CASE("solve dump and limit outputs") {
  auto out = scratch("solve");
  std::ostringstream log, err;
  RunOptions o = small("solve", out);
  o.overrides["coefficients"] = {{"name", "cubic-semilinear"}};
  o.overrides["solve"] = {{"s", 2.0}, {"M0", 4.0}, {"T", 1e-2}, {"T_target", 2e-2}, {"dump", true}};
  CHECK(run(o, log, err) == 0);
  auto frames = read_fields((out / "solve_trajectory.bin").string());
  CHECK(frames.size() >= 2u);
  CHECK(frames[0].grid() == Grid(1, 8.0, 64));

  RunOptions l = small("limit", out);
  l.overrides["coefficients"] = {{"name", "cubic-semilinear"}};
  l.overrides["solve"] = {{"s", 2.0}, {"M0", 4.0}, {"T", 1e-2}};
  l.overrides["limit"] = {{"eps_list", {1e-2, 5e-3, 2.5e-3}}, {"T_target", 2e-2}};
  CHECK(run(l, log, err) == 0);
  json j = read_json(out / "limit.json");
  CHECK(j.contains("cauchy_slope"));
  fs::remove_all(out);
}
