#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "qls/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"qlslab: quasilinear Schroedinger numerical laboratory"};
  app.require_subcommand(1);

  qls::RunOptions opt;
  std::uint64_t seed = 0;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--out", opt.out_dir, "output directory (overrides QLS_OUT_DIR)");
    sub->add_option("--threads", opt.threads, "OpenMP threads");
    sub->add_option("--seed", seed, "seed for random trial fields");
  };

  for (const char* name : {"rays", "doi", "solve", "limit", "verify"}) common(app.add_subcommand(name));
  auto* lin = app.add_subcommand("linear", "linear evolution and a-priori estimate");
  common(lin);
  double eps = -1.0, T = -1.0, dt = -1.0;
  int mu0 = -2;
  std::string metric;
  lin->add_option("--eps", eps, "hyperviscosity");
  lin->add_option("--T", T, "horizon");
  lin->add_option("--dt", dt, "time step");
  lin->add_option("--metric", metric, "coefficient family");
  lin->add_option("--mu0", mu0, "cube index for the gauge transform");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  opt.subcommand = app.get_subcommands().front()->get_name();
  if (app.get_subcommands().front()->count("--seed")) opt.seed = seed;
  if (eps >= 0.0) opt.overrides["linear"]["eps"] = eps;
  if (T >= 0.0) opt.overrides["linear"]["T"] = T;
  if (dt > 0.0) opt.overrides["linear"]["dt"] = dt;
  if (mu0 >= -1) opt.overrides["linear"]["mu0"] = mu0;
  if (!metric.empty()) opt.overrides["coefficients"]["name"] = metric;
  return qls::run(opt, std::cout, std::cerr);
}
