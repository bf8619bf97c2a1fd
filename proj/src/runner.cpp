#include "qls/runner.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <ostream>

#include "qls/coeffs.hpp"
#include "qls/doi.hpp"
#include "qls/hamiltonian.hpp"
#include "qls/kernels.hpp"
#include "qls/linear.hpp"
#include "qls/nonlinear.hpp"

namespace qls {

namespace fs = std::filesystem;

json default_config() {
  json initial = {{"kind", "gaussian"}, {"amplitude", 0.1}, {"width", 2.0}, {"center", {0.0}}, {"k", {0}}};
  return json{
      {"grid", {{"dim", 1}, {"L", 32.0}, {"N", 256}}},
      {"coefficients", {{"name", "flat"}, {"params", json::object()}}},
      {"seed", 1},
      {"output_dir", ""},
      {"rays",
       {{"positions", 8}, {"directions", 16}, {"extent", -1.0}, {"escape_radius", -1.0}, {"s_budget", 50.0},
        {"ds", 1e-2}}},
      {"doi",
       {{"R_cut", 1.0}, {"xi_max", 1e5}, {"n_x", 33}, {"n_mag", 33}, {"n_dir", 33}, {"N_max", 20},
        {"centers", json::array()}}},
      {"linear",
       {{"eps", 1e-3}, {"T", 0.5}, {"dt", 1e-3}, {"save_every", 10}, {"mu0", -1}, {"gauge_R", 4.0},
        {"validate", true}, {"dump", false},
        {"packet", {{"center", {-8.0}}, {"k", {80}}, {"width", 2.0}}}}},
      {"solve",
       {{"s", 6.0}, {"M0", 4.0}, {"eps", 1e-2}, {"T", 1e-2}, {"dt", 1e-3}, {"T_target", 5e-2},
        {"picard_tol", 1e-10}, {"picard_max", 80}, {"record_apriori", true}, {"dump", false},
        {"initial", initial}}},
      {"limit", {{"eps_list", {1e-2, 5e-3, 2.5e-3, 1.25e-3}}, {"T_target", 5e-2}}},
      {"verify", {{"rays", true}, {"z_samples", 12}}}};
}

namespace {

bool same_kind(const json& def, const json& v) {
  if (def.is_number()) return v.is_number();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_string()) return v.is_string();
  if (def.is_array()) return v.is_array();
  if (def.is_object()) return v.is_object();
  return false;
}

void merge_checked(json& into, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config " + (path.empty() ? std::string("root") : path) + " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!into.contains(it.key())) throw ConfigError("unknown config key: " + key);
    json& slot = into[it.key()];
    if (!same_kind(slot, it.value())) throw ConfigError("config key " + key + " has the wrong type");
    if (slot.is_object() && it.key() != "params") {
      merge_checked(slot, it.value(), key);
    } else {
      slot = it.value();
    }
  }
}

Vec vec_of(const json& a, int dim, const char* what) {
  if (!a.is_array() || a.size() < 1 || a.size() > 2) throw ConfigError(std::string(what) + " must have 1 or 2 entries");
  Vec v{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].is_number()) throw ConfigError(std::string(what) + " entries must be numbers");
    if (static_cast<int>(i) < dim) v[i] = a[i].get<double>();
  }
  return v;
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

}  // namespace

json resolve_config(const json& user) {
  json cfg = default_config();
  merge_checked(cfg, user, "");
  const json& g = cfg["grid"];
  int dim = g["dim"].get<int>();
  require(dim == 1 || dim == 2, "grid.dim must be 1 or 2");
  require(g["L"].get<double>() > 0.0, "grid.L must be positive");
  int N = g["N"].get<int>();
  require(N >= 8 && (N & (N - 1)) == 0, "grid.N must be a power of two >= 8");
  require(cfg["seed"].is_number_integer() && cfg["seed"].get<long long>() >= 0, "seed must be a nonnegative integer");
  require(cfg["coefficients"]["name"].is_string(), "coefficients.name must be a string");
  const json& s = cfg["solve"];
  require(s["s"].get<double>() >= 0.0, "solve.s must be nonnegative");
  require(s["dt"].get<double>() > 0.0 && s["T"].get<double>() > 0.0, "solve.T and solve.dt must be positive");
  require(s["eps"].get<double>() > 0.0, "solve.eps must be positive");
  require(s["picard_max"].get<int>() >= 1, "solve.picard_max must be >= 1");
  const json& l = cfg["linear"];
  require(l["eps"].get<double>() >= 0.0, "linear.eps must be nonnegative");
  require(l["dt"].get<double>() > 0.0 && l["T"].get<double>() >= 0.0, "linear.T and linear.dt must be valid");
  require(l["save_every"].get<int>() >= 1, "linear.save_every must be >= 1");
  for (const auto& e : cfg["limit"]["eps_list"]) require(e.is_number() && e.get<double>() > 0.0, "limit.eps_list entries must be positive");
  require(cfg["limit"]["eps_list"].size() >= 2, "limit.eps_list needs at least two entries");
  for (const auto& c : cfg["doi"]["centers"]) vec_of(c, dim, "doi.centers");
  vec_of(l["packet"]["center"], dim, "linear.packet.center");
  vec_of(l["packet"]["k"], dim, "linear.packet.k");
  vec_of(s["initial"]["center"], dim, "solve.initial.center");
  vec_of(s["initial"]["k"], dim, "solve.initial.k");
  std::string kind = s["initial"]["kind"].get<std::string>();
  require(kind == "gaussian" || kind == "random" || kind == "zero", "solve.initial.kind must be gaussian, random or zero");
  // Surface coefficient errors before any computation.
  make_coefficients(cfg["coefficients"]["name"].get<std::string>(), dim, cfg["coefficients"]["params"]);
  return cfg;
}

namespace {

struct Context {
  json cfg;
  Grid grid;
  CoefficientSet cs;
  unsigned seed;
  fs::path out;
};

StateField initial_state(const Context& c) {
  const json& in = c.cfg["solve"]["initial"];
  std::string kind = in["kind"].get<std::string>();
  double amp = in["amplitude"].get<double>();
  const Grid& g = c.grid;
  if (kind == "zero") return StateField(g);
  if (kind == "random") {
    StateField r = apply_multiplier(StateField::random(g, c.seed), [](const Vec& k) { return cplx(std::exp(-dot(k, k))); });
    double n = max_abs(r);
    if (n > 0.0) r *= amp / n;
    return r;
  }
  double w = in["width"].get<double>();
  if (!(w > 0.0)) throw ConfigError("solve.initial.width must be positive");
  Vec center = vec_of(in["center"], g.dim(), "center");
  Vec m = vec_of(in["k"], g.dim(), "k");
  Vec k{m[0] * g.frequency_step(), m[1] * g.frequency_step()};
  StateField u = wave_packet(g, center, k, w);
  u *= amp;
  return u;
}

MetricField metric_of(const Context& c) {
  if (c.cs.metric0 && !c.cs.a_depends_on_z) return *c.cs.metric0;
  return freeze_at_state(c.cs, initial_state(c), 0.0).metric();
}

double side_for(const Grid& g) {
  return 2.0 * g.half_length() / std::max(1.0, std::round(2.0 * g.half_length()));
}

int cmd_rays(const Context& c, std::ostream& log) {
  const json& r = c.cfg["rays"];
  double L = c.grid.half_length();
  double extent = r["extent"].get<double>() > 0.0 ? r["extent"].get<double>() : 0.25 * L;
  double esc = r["escape_radius"].get<double>() > 0.0 ? r["escape_radius"].get<double>() : 0.5 * L;
  auto sample = default_ray_sample(c.grid.dim(), extent, r["positions"].get<int>(), r["directions"].get<int>());
  MetricField m = metric_of(c);
  auto v = classify_nontrapping(m, sample, esc, r["s_budget"].get<double>(), r["ds"].get<double>());
  std::ofstream csv(c.out / "rays.csv");
  write_rays_csv(csv, v);
  std::size_t escaped = 0;
  for (const auto& ray : v.rays) escaped += ray.status == RayStatus::escaped;
  json j{{"metric", m.name},
         {"rays", v.rays.size()},
         {"escaped", escaped},
         {"undetermined", v.undetermined},
         {"failed", v.failed},
         {"nontrapping_on_sample", v.nontrapping_on_sample},
         {"worst_ray", v.worst_ray},
         {"escape_radius", v.escape_radius},
         {"s_budget", v.s_budget}};
  write_json((c.out / "rays.json").string(), j);
  log << "rays: " << escaped << "/" << v.rays.size() << " escaped, nontrapping_on_sample="
      << (v.nontrapping_on_sample ? "true" : "false") << "\n";
  return 0;
}

int cmd_doi(const Context& c, std::ostream& log) {
  const json& d = c.cfg["doi"];
  int dim = c.grid.dim();
  double L = c.grid.half_length();
  double R = d["R_cut"].get<double>();
  auto sample = default_doi_sample(dim, L, R, d["xi_max"].get<double>(), d["n_x"].get<int>(), d["n_mag"].get<int>(),
                                   d["n_dir"].get<int>());
  auto r = flat_escape_symbol(dim, R);
  json out;
  out["flat_identity"] = flat_identity_check(r, sample, R).to_json();
  Symbol h = principal_symbol(metric_of(c));
  out["lower_bound"] = verify_lower_bound(flat_hamiltonian(dim), r.symbol, sample, 2.0 * R).to_json();
  std::vector<Vec> centers;
  for (const auto& cj : d["centers"]) centers.push_back(vec_of(cj, dim, "center"));
  if (centers.empty()) {
    centers.push_back(Vec{});
    centers.push_back(Vec{0.25 * L, 0.0});
  }
  json cj = json::array();
  bool ok = true;
  for (const auto& x : centers) {
    try {
      auto p = uncentered_symbol(r, r, x, h, d["N_max"].get<int>(), sample);
      cj.push_back(p.report.to_json());
    } catch (const ComputationError& e) {
      ok = false;
      cj.push_back({{"center", {x[0], x[1]}}, {"error", e.what()}});
    }
  }
  out["uncentered"] = cj;
  out["all_centers_constructed"] = ok;
  write_json((c.out / "doi.json").string(), out);
  log << "doi: identity max_rel_error=" << out["flat_identity"]["values"]["max_rel_error"].get<double>()
      << ", centers constructed=" << (ok ? "all" : "not all") << "\n";
  return 0;
}

int cmd_linear(const Context& c, std::ostream& log) {
  const json& l = c.cfg["linear"];
  const Grid& g = c.grid;
  int dim = g.dim();
  Vec center = vec_of(l["packet"]["center"], dim, "center");
  Vec m = vec_of(l["packet"]["k"], dim, "k");
  Vec k{m[0] * g.frequency_step(), m[1] * g.frequency_step()};
  StateField u0 = wave_packet(g, center, k, l["packet"]["width"].get<double>());
  LinearSystem sys = linear_system_from_state(c.cs, StateField(g), 0.0, l["eps"].get<double>());
  json out;
  if (l["validate"].get<bool>()) out["validation"] = validate_linear(sys.frozen).to_json();
  double T = l["T"].get<double>(), dt = l["dt"].get<double>();
  int save = l["save_every"].get<int>();
  if (std::abs(std::llround(T / (dt * save)) * dt * save - T) > 1e-9 * std::max(1.0, T))
    throw ConfigError("linear.T must be a multiple of dt * save_every");
  Trajectory tr = evolve(sys, u0, T, dt, save);
  CubePartition part(g, side_for(g));
  auto rep = apriori_report(tr, part, T, forcing_norms(sys, tr));
  out["apriori"] = rep.to_json();
  int mu0 = l["mu0"].get<int>();
  if (mu0 >= 0) {
    if (static_cast<std::size_t>(mu0) >= part.cubes().size()) throw ConfigError("linear.mu0 is not a cube index");
    const json& d = c.cfg["doi"];
    double Rc = d["R_cut"].get<double>();
    auto sample = default_doi_sample(dim, g.half_length(), Rc, d["xi_max"].get<double>(), 17, 17, 17);
    auto r = flat_escape_symbol(dim, Rc);
    Vec x0 = part.cubes()[mu0].center;
    auto p0 = uncentered_symbol(r, r, x0, principal_symbol(sys.frozen.metric()), d["N_max"].get<int>(), sample);
    // beta^0 from |Im b1|; cubes with beta > 1e-12 contribute their own escape symbol.
    StateField imb(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double s2 = 0.0;
      for (int j = 0; j < dim; ++j) s2 += std::norm(sys.frozen.b1[j][i].imag());
      imb[i] = std::sqrt(s2);
    }
    auto beta = cube_sup_weights(imb, part);
    std::vector<std::pair<double, Symbol>> terms;
    double sum_beta = 0.0;
    for (std::size_t q = 0; q < beta.size(); ++q) {
      sum_beta += beta[q];
      if (beta[q] > 1e-12) terms.emplace_back(beta[q], shifted(r.symbol, part.cubes()[q].center));
    }
    Symbol gamma = assemble_gamma(p0.symbol, terms);
    double C0p = p0.report.value("C1");
    std::vector<StateField> corpus{u0, StateField::random(g, c.seed)};
    // Inversion failures are cured by a larger cutoff radius.
    double R = l["gauge_R"].get<double>();
    EstimateReport gr;
    std::string last_error;
    for (int attempt = 0; attempt < 6; ++attempt, R *= 2.0) {
      try {
        gr = gauge_roundtrip(gauge_operator(g, gamma, R, 2.0 / C0p), corpus);
        if (gr.pass) break;
      } catch (const ComputationError& e) {
        last_error = e.what();
      }
    }
    if (gr.name.empty()) throw ComputationError("gauge inversion failed for every R: " + last_error);
    out["gauge"] = {{"mu0", mu0}, {"R", R},         {"C0_prime", C0p}, {"C0_tilde", 2.0 / C0p},
                    {"sum_beta0", sum_beta}, {"roundtrip", gr.to_json()}};
  }
  if (l["dump"].get<bool>()) write_fields((c.out / "linear_trajectory.bin").string(), tr.frames());
  write_json((c.out / "linear.json").string(), out);
  log << "linear: fitted A=" << rep.A << " (lhs " << rep.lhs << ", rhs " << rep.rhs_data << ")\n";
  return 0;
}

SolverConfig solver_config(const json& s) {
  SolverConfig cfg;
  cfg.s = s["s"].get<double>();
  cfg.M0 = s["M0"].get<double>();
  cfg.epsilon = s["eps"].get<double>();
  cfg.T = s["T"].get<double>();
  cfg.dt = s["dt"].get<double>();
  cfg.picard_tol = s["picard_tol"].get<double>();
  cfg.picard_max = s["picard_max"].get<int>();
  return cfg;
}

int cmd_solve(const Context& c, std::ostream& log) {
  const json& s = c.cfg["solve"];
  SolverConfig cfg = solver_config(s);
  StateField u0 = initial_state(c);
  ContinuationOptions opt;
  opt.record_apriori = s["record_apriori"].get<bool>();
  auto res = continuation_solve(c.cs, cfg, u0, s["T_target"].get<double>(), opt);
  json out{{"continuation", res.to_json()}, {"lambda", data_size(c.cs, u0, cfg.s)}};
  // Smoothness thresholds with the derivative-count knob N = 4.
  double n = c.grid.dim(), N = 4.0;
  out["s_constraints"] = {{"s", cfg.s},
                          {"s_gt_n_plus_3", cfg.s > n + 3.0},
                          {"s_gt_N_plus_half_n_plus_4", cfg.s > N + n / 2.0 + 4.0},
                          {"s_gt_N_plus_n_plus_4", cfg.s > N + n + 4.0}};
  double sv = cfg.s;
  if (sv >= 0.0 && std::floor(sv) == sv && static_cast<long long>(sv) % 2 == 0)
    out["hierarchy"] = hierarchy_norms(res.solution.trajectory, sv).to_json();
  if (s["dump"].get<bool>()) write_fields((c.out / "solve_trajectory.bin").string(), res.solution.trajectory.frames());
  write_json((c.out / "solve.json").string(), out);
  log << "solve: horizon " << res.horizon << " in " << res.windows.size() << " windows (" << res.stop_reason << ")\n";
  return 0;
}

int cmd_limit(const Context& c, std::ostream& log) {
  SolverConfig cfg = solver_config(c.cfg["solve"]);
  StateField u0 = initial_state(c);
  std::vector<double> eps = c.cfg["limit"]["eps_list"].get<std::vector<double>>();
  ContinuationOptions opt;
  opt.record_apriori = false;
  auto rep = vanishing_viscosity(c.cs, cfg, u0, eps, c.cfg["limit"]["T_target"].get<double>(), default_backend(), opt);
  write_json((c.out / "limit.json").string(), rep.to_json());
  log << "limit: cauchy slope " << rep.slope << ", monotone=" << (rep.monotone ? "true" : "false") << "\n";
  return 0;
}

int cmd_verify(const Context& c, std::ostream& log) {
  const json& v = c.cfg["verify"];
  ValidationOptions opt;
  opt.run_rays = v["rays"].get<bool>();
  opt.positions = c.cfg["rays"]["positions"].get<int>();
  opt.directions = c.cfg["rays"]["directions"].get<int>();
  opt.s_budget = c.cfg["rays"]["s_budget"].get<double>();
  opt.ray_ds = c.cfg["rays"]["ds"].get<double>();
  StateField u0 = initial_state(c);
  auto zs = default_z_sample(c.grid.dim(), c.cs.meta.M, c.seed, v["z_samples"].get<int>());
  auto nl = validate_assumptions(c.cs, c.grid, zs, &u0, opt);
  auto lin = validate_linear(freeze_at_state(c.cs, u0, 0.0), opt);
  auto dm = validate_metric(metric_of(c), c.grid, opt);
  json matrix = json::object();
  bool all = true;
  for (const auto* rep : {&nl, &lin, &dm})
    for (const auto& ch : rep->children) {
      matrix[ch.name] = ch.pass;
      all = all && ch.pass;
    }
  json out{{"matrix", matrix},
           {"pass", all},
           {"reports", {{"nonlinear", nl.to_json()}, {"linear", lin.to_json()}, {"metric", dm.to_json()}}}};
  write_json((c.out / "verify.json").string(), out);
  log << "verify: " << (all ? "all pass" : "some checks fail") << "\n";
  for (auto it = matrix.begin(); it != matrix.end(); ++it)
    log << "  " << it.key() << " " << (it.value().get<bool>() ? "pass" : "FAIL") << "\n";
  return all ? 0 : 1;
}

}  // namespace

int run(const RunOptions& opt, std::ostream& log, std::ostream& err) {
  try {
    json user = json::object();
    if (!opt.config_path.empty()) {
      std::ifstream is(opt.config_path);
      if (!is) throw ConfigError("cannot open config " + opt.config_path);
      try {
        user = json::parse(is);
      } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
      }
    }
    if (!opt.overrides.empty()) {
      json merged = default_config();
      merge_checked(merged, user, "");
      merge_checked(merged, opt.overrides, "");
      user = merged;
    }
    if (opt.seed) user["seed"] = *opt.seed;
    json cfg = resolve_config(user);
    static const char* known[] = {"rays", "doi", "linear", "solve", "limit", "verify"};
    if (std::find(std::begin(known), std::end(known), opt.subcommand) == std::end(known))
      throw ConfigError("unknown subcommand " + opt.subcommand);

    std::string out = opt.out_dir;
    if (out.empty()) {
      if (const char* env = std::getenv("QLS_OUT_DIR"); env && *env) out = env;
    }
    if (out.empty()) out = cfg["output_dir"].get<std::string>();
    if (out.empty()) out = "qls_out";
    fs::create_directories(out);
    if (opt.threads > 0) set_threads(opt.threads);

    const json& g = cfg["grid"];
    Grid grid(g["dim"].get<int>(), g["L"].get<double>(), g["N"].get<int>());
    Context c{cfg, grid,
              make_coefficients(cfg["coefficients"]["name"].get<std::string>(), grid.dim(), cfg["coefficients"]["params"]),
              static_cast<unsigned>(cfg["seed"].get<std::uint64_t>()), fs::path(out)};
    json resolved = cfg;
    resolved["output_dir"] = out;
    resolved["subcommand"] = opt.subcommand;
    write_json((c.out / "resolved_config.json").string(), resolved);

    if (opt.subcommand == "rays") return cmd_rays(c, log);
    if (opt.subcommand == "doi") return cmd_doi(c, log);
    if (opt.subcommand == "linear") return cmd_linear(c, log);
    if (opt.subcommand == "solve") return cmd_solve(c, log);
    if (opt.subcommand == "limit") return cmd_limit(c, log);
    return cmd_verify(c, log);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace qls
