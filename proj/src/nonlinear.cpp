#include "qls/nonlinear.hpp"

#include <algorithm>
#include <exception>
#include <limits>

#include <omp.h>

namespace qls {

double data_size(const CoefficientSet& cs, const StateField& v0, double s) {
  const Grid& g = v0.grid();
  std::vector<double> fn;
  const int n = 10;
  for (int i = 0; i <= n; ++i) {
    double t = static_cast<double>(i) / n;
    fn.push_back(sobolev_norm(StateField::sample(g, [&](const Vec& x) { return cs.f(x, t); }), s));
  }
  return sobolev_norm(v0, s) + trapezoid_to(fn, 1.0 / n, 1.0);
}

void validate_config(const SolverConfig& cfg, double lambda) {
  if (!(cfg.epsilon > 0.0)) throw ConfigError("solver: epsilon must be positive");
  if (!(cfg.dt > 0.0) || !(cfg.T > 0.0)) throw ConfigError("solver: T and dt must be positive");
  long long n = std::llround(cfg.T / cfg.dt);
  if (n < 1 || std::abs(n * cfg.dt - cfg.T) > 1e-9 * cfg.T) throw ConfigError("solver: dt must divide T");
  if (!(cfg.picard_tol > 0.0) || cfg.picard_max < 1) throw ConfigError("solver: bad Picard controls");
  if (!(cfg.M0 > 2.0 * lambda))
    throw ConfigError("solver: M0 = " + std::to_string(cfg.M0) + " must exceed 2 lambda = " +
                      std::to_string(2.0 * lambda));
}

StateField state_operator(const CoefficientSet& cs, const StateField& u, const StateField& v, double t) {
  const Grid& g = u.grid();
  require_same_grid(g, v.grid(), "state_operator");
  if (g.dim() != cs.dim) throw ConfigError("coefficient and grid dimensions differ");
  auto z = state_z(u);
  StateField vb = v.conj();
  std::array<StateField, 2> dv{partial(v, 0), g.dim() == 2 ? partial(v, 1) : StateField(g)};
  std::array<StateField, 2> dvb{partial(vb, 0), g.dim() == 2 ? partial(vb, 1) : StateField(g)};
  StateField vxx = second_partial(v, 0, 0);
  StateField vxy = g.dim() == 2 ? second_partial(v, 0, 1) : StateField(g);
  StateField vyy = g.dim() == 2 ? second_partial(v, 1, 1) : StateField(g);
  StateField out(g, t);
  const cplx I(0.0, 1.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec x = g.point(i);
    Mat2 A = cs.a(x, t, z[i]);
    CVec b1 = cs.b1(x, t, z[i]), b2 = cs.b2(x, t, z[i]);
    cplx lead = A(0, 0) * vxx[i];
    if (g.dim() == 2) lead += 2.0 * A(0, 1) * vxy[i] + A(1, 1) * vyy[i];
    cplx first = b1[0] * dv[0][i] + b2[0] * dvb[0][i];
    if (g.dim() == 2) first += b1[1] * dv[1][i] + b2[1] * dvb[1][i];
    cplx uu = z[i][z_u], ub = z[i][z_ubar];
    out[i] = I * lead + first + cs.c1(x, t, uu, ub) * v[i] + cs.c2(x, t, uu, ub) * vb[i];
  }
  return out;
}

StateField nonlinear_term(const CoefficientSet& cs, const StateField& v, double t) {
  auto z = state_z(v);
  double zmax = 0.0;
  for (const auto& zi : z) zmax = std::max(zmax, z_norm(zi, v.grid().dim()));
  if (!(zmax < cs.meta.M))
    throw ComputationError("ball excursion: max |z| = " + std::to_string(zmax) + " exceeds M = " +
                           std::to_string(cs.meta.M) + " at t = " + std::to_string(t));
  return state_operator(cs, v, v, t);
}

namespace {

std::vector<cplx> biharmonic_factor(const Grid& g, double eps, double tau) {
  std::vector<cplx> e(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec k = g.frequency(i);
    double k2 = dot(k, k);
    e[i] = std::exp(-eps * tau * k2 * k2);
  }
  return e;
}

StateField apply_factor(const StateField& f, const std::vector<cplx>& e) {
  Spectrum c = forward_transform(f);
  for (std::size_t i = 0; i < e.size(); ++i) c[i] *= e[i];
  return inverse_transform(c, f.time());
}

StateField forcing_field(const CoefficientSet& cs, const Grid& g, double t) {
  return StateField::sample(g, [&](const Vec& x) { return cs.f(x, t); }, t);
}

double sup_hs_distance(const Trajectory& a, const Trajectory& b, double s) {
  double d = 0.0;
  for (std::size_t n = 0; n < a.size(); ++n) d = std::max(d, sobolev_norm(a[n] - b[n], s));
  return d;
}

bool even_integer(double s) { return s >= 0.0 && std::floor(s) == s && static_cast<long long>(s) % 2 == 0; }

}  // namespace

Trajectory semigroup_orbit(const StateField& v0, double eps, double dt, long long steps) {
  auto E = biharmonic_factor(v0.grid(), eps, dt);
  Trajectory tr(dt);
  StateField w = v0;
  tr.push(w);
  for (long long n = 0; n < steps; ++n) {
    w = apply_factor(w, E);
    w.set_time(v0.time() + (n + 1) * dt);
    tr.push(w);
  }
  return tr;
}

Trajectory duhamel_map(const CoefficientSet& cs, const Trajectory& v, const StateField& v0, double eps) {
  if (v.empty()) throw ConfigError("duhamel_map: empty trajectory");
  require_same_grid(v[0].grid(), v0.grid(), "duhamel_map");
  const Grid& g = v0.grid();
  double dt = v.dt();
  auto E = biharmonic_factor(g, eps, dt);
  Trajectory out(dt);
  StateField w = v0;
  w.set_time(v[0].time());
  out.push(w);
  auto source = [&](std::size_t n) {
    double t = v[n].time();
    StateField s = nonlinear_term(cs, v[n], t);
    s += forcing_field(cs, g, t);
    return s;
  };
  StateField gn = v.size() > 1 ? source(0) : StateField(g);
  for (std::size_t n = 0; n + 1 < v.size(); ++n) {
    StateField acc = w;
    acc.axpy(0.5 * dt, gn);
    w = apply_factor(acc, E);
    StateField gnext = source(n + 1);
    w.axpy(0.5 * dt, gnext);
    w.set_time(v[n + 1].time());
    w.require_finite("duhamel_map");
    out.push(w);
    gn = std::move(gnext);
  }
  return out;
}

json ViscousSolution::to_json() const {
  json j;
  j["epsilon"] = epsilon;
  j["iterations"] = iterations;
  j["differences"] = differences;
  j["ratios"] = ratios;
  j["sup_hs"] = sup_hs;
  j["residual"] = residual;
  j["frames"] = trajectory.size();
  j["horizon"] = trajectory.empty() ? 0.0 : trajectory.horizon();
  return j;
}

ViscousSolution picard_solve(const CoefficientSet& cs, const SolverConfig& cfg, const StateField& v0,
                             InitialIterate init) {
  validate_config(cfg, data_size(cs, v0, cfg.s));
  v0.require_finite("picard_solve");
  long long steps = std::llround(cfg.T / cfg.dt);
  Trajectory v(cfg.dt);
  if (init == InitialIterate::semigroup) {
    v = semigroup_orbit(v0, cfg.epsilon, cfg.dt, steps);
  } else {
    for (long long n = 0; n <= steps; ++n) {
      StateField c = v0;
      c.set_time(v0.time() + n * cfg.dt);
      v.push(c);
    }
  }
  ViscousSolution sol;
  sol.epsilon = cfg.epsilon;
  int growing = 0;
  bool converged = false;
  for (int it = 1; it <= cfg.picard_max; ++it) {
    Trajectory w = duhamel_map(cs, v, v0, cfg.epsilon);
    double diff = sup_hs_distance(w, v, cfg.s);
    if (!std::isfinite(diff)) throw ComputationError("picard: non-finite iterate");
    if (!sol.differences.empty()) {
      double r = diff / sol.differences.back();
      sol.ratios.push_back(r);
      growing = r >= 1.0 ? growing + 1 : 0;
    }
    sol.differences.push_back(diff);
    v = std::move(w);
    sol.iterations = it;
    if (diff < cfg.picard_tol) {
      converged = true;
      break;
    }
    if (growing >= 3) throw ComputationError("not contracting: shrink T or raise eps");
  }
  if (!converged) throw ComputationError("not contracting: picard_max reached without convergence");
  sol.residual = sup_hs_distance(duhamel_map(cs, v, v0, cfg.epsilon), v, cfg.s);
  for (const auto& f : v.frames()) sol.sup_hs = std::max(sol.sup_hs, sobolev_norm(f, cfg.s));
  if (sol.sup_hs > cfg.M0)
    throw ComputationError("fixed point leaves X_{M0,T}: sup ||u||_{H^s} = " + std::to_string(sol.sup_hs));
  if (even_integer(cfg.s)) sol.hierarchy = hierarchy_norms(v, cfg.s).table;
  sol.trajectory = std::move(v);
  return sol;
}

// ---------------------------------------------------------------------------

json HierarchyReport::to_json() const {
  return json{{"times", times}, {"table", table}, {"growth", growth}, {"level_ratio", level_ratio},
              {"ladder_ok", ladder_ok}};
}

HierarchyReport hierarchy_norms(const Trajectory& tr, double s) {
  if (!even_integer(s)) throw ConfigError("hierarchy_norms: s must be an even integer");
  if (tr.empty()) throw ConfigError("hierarchy_norms: empty trajectory");
  int levels = static_cast<int>(s) / 2;
  HierarchyReport h;
  for (const auto& f : tr.frames()) {
    h.times.push_back(f.time());
    Spectrum c = forward_transform(f);
    const Grid& g = f.grid();
    std::vector<double> row;
    for (int m = 0; m <= levels; ++m) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        Vec k = g.frequency(i);
        acc += std::pow(1.0 + dot(k, k), 2.0 * m) * std::norm(c[i]);
      }
      row.push_back(std::sqrt(acc * c.norm_weight()));
    }
    h.table.push_back(std::move(row));
  }
  const Grid& g = tr[0].grid();
  double kmax = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) kmax = std::max(kmax, dot(g.frequency(i), g.frequency(i)));
  h.ladder_ok = true;
  for (int m = 0; m <= levels; ++m) {
    double first = h.table[0][m], mx = 0.0, ratio = 0.0;
    for (const auto& row : h.table) {
      mx = std::max(mx, row[m]);
      if (m > 0 && row[m - 1] > 0.0) ratio = std::max(ratio, row[m] / row[m - 1]);
      h.ladder_ok = h.ladder_ok && std::isfinite(row[m]);
    }
    h.growth.push_back(first > 0.0 && mx > 0.0 ? std::log(mx / first) : 0.0);
    if (m > 0) {
      h.level_ratio.push_back(ratio);
      h.ladder_ok = h.ladder_ok && ratio <= (1.0 + kmax) * (1.0 + 1e-12);
    }
  }
  return h;
}

// ---------------------------------------------------------------------------

json ContinuationResult::to_json() const {
  json w = json::array();
  for (const auto& r : windows)
    w.push_back({{"start", r.start},
                 {"length", r.length},
                 {"iterations", r.iterations},
                 {"max_ratio", r.max_ratio},
                 {"hs_at_end", r.hs_at_end},
                 {"apriori_A", r.apriori_A}});
  return json{{"solution", solution.to_json()},
              {"windows", w},
              {"horizon", horizon},
              {"reached_target", reached_target},
              {"violation_time", violation_time},
              {"stop_reason", stop_reason}};
}

ContinuationResult continuation_solve(const CoefficientSet& cs, const SolverConfig& cfg, const StateField& u0,
                                      double T_target, const ContinuationOptions& opt) {
  if (!(T_target > 0.0)) throw ConfigError("continuation: T_target must be positive");
  if (!(cfg.dt > 0.0)) throw ConfigError("continuation: dt must be positive");
  long long total = std::llround(T_target / cfg.dt);
  if (std::abs(total * cfg.dt - T_target) > 1e-9 * T_target) throw ConfigError("continuation: dt must divide T_target");
  long long wsteps = std::llround(cfg.T / cfg.dt);
  if (wsteps < 1) throw ConfigError("continuation: window shorter than dt");
  const Grid& g = u0.grid();
  double side = 2.0 * g.half_length() / std::max(1.0, std::round(2.0 * g.half_length()));
  CubePartition part(g, side);

  ContinuationResult res;
  res.solution.epsilon = cfg.epsilon;
  Trajectory full(cfg.dt);
  StateField u = u0;
  full.push(u);
  long long done = 0;
  double t0 = u0.time();
  while (done < total) {
    long long ws = std::min(wsteps, total - done);
    std::optional<ViscousSolution> sol;
    int halvings = 0;
    while (!sol) {
      SolverConfig wc = cfg;
      wc.T = ws * cfg.dt;
      try {
        sol = picard_solve(cs, wc, u);
      } catch (const ComputationError& e) {
        std::string msg = e.what();
        if (msg.rfind("not contracting", 0) == 0 && halvings < opt.max_halvings && ws > 1) {
          ws = std::max<long long>(1, ws / 2);
          ++halvings;
          continue;
        }
        if (done == 0) throw;
        res.stop_reason = msg;
        break;
      } catch (const ConfigError& e) {
        if (done == 0) throw;
        res.stop_reason = e.what();
        break;
      }
    }
    if (!sol) break;
    wsteps = ws;
    WindowRecord rec;
    rec.start = t0 + done * cfg.dt;
    rec.length = ws * cfg.dt;
    rec.iterations = sol->iterations;
    for (double r : sol->ratios) rec.max_ratio = std::max(rec.max_ratio, r);
    if (opt.record_apriori) {
      try {
        LinearSystem sys = linear_system_from_state(cs, u, rec.start, cfg.epsilon);
        Trajectory tr = evolve(sys, u, rec.length, cfg.dt);
        rec.apriori_A = apriori_report(tr, part, rec.length, forcing_norms(sys, tr)).A;
      } catch (const std::exception&) {
        rec.apriori_A = -1.0;
      }
    }
    for (std::size_t n = 1; n < sol->trajectory.size(); ++n) full.push(sol->trajectory[n]);
    auto& agg = res.solution;
    agg.iterations += sol->iterations;
    agg.differences.insert(agg.differences.end(), sol->differences.begin(), sol->differences.end());
    agg.ratios.insert(agg.ratios.end(), sol->ratios.begin(), sol->ratios.end());
    agg.sup_hs = std::max(agg.sup_hs, sol->sup_hs);
    agg.residual = std::max(agg.residual, sol->residual);
    u = sol->trajectory.back();
    done += ws;
    rec.hs_at_end = sobolev_norm(u, cfg.s);
    res.windows.push_back(rec);
    if (done < total && rec.hs_at_end > 0.25 * cfg.M0) {
      res.violation_time = u.time();
      res.stop_reason = "norm gate: ||u||_{H^s} > M0/4 at restart";
      break;
    }
  }
  res.horizon = done * cfg.dt;
  res.reached_target = done == total;
  if (res.reached_target) res.stop_reason = "reached target";
  if (even_integer(cfg.s)) res.solution.hierarchy = hierarchy_norms(full, cfg.s).table;
  res.solution.trajectory = std::move(full);
  return res;
}

// ---------------------------------------------------------------------------

json LimitReport::to_json() const {
  return json{{"eps", eps},
              {"horizons", horizons},
              {"T_star", T_star},
              {"gaps", gaps},
              {"l2_diffs", l2_diffs},
              {"hs_bounds", hs_bounds},
              {"hs1_interp", hs1_interp},
              {"hs1_direct", hs1_direct},
              {"cauchy_slope", slope},
              {"monotone", monotone},
              {"limit_epsilon", limit_epsilon},
              {"report", report.to_json()}};
}

LimitReport vanishing_viscosity(const CoefficientSet& cs, const SolverConfig& base, const StateField& u0,
                                std::vector<double> eps_list, double T_target, Backend backend,
                                const ContinuationOptions& opt) {
  if (eps_list.size() < 2) throw ConfigError("vanishing_viscosity: need at least two eps values");
  for (double e : eps_list)
    if (!(e > 0.0)) throw ConfigError("vanishing_viscosity: eps values must be positive");
  std::sort(eps_list.begin(), eps_list.end(), std::greater<>());
  std::size_t n = eps_list.size();
  std::vector<std::optional<ContinuationResult>> runs(n);
  std::vector<std::exception_ptr> errors(n);
  auto run = [&](std::size_t i) {
    try {
      SolverConfig c = base;
      c.epsilon = eps_list[i];
      runs[i] = continuation_solve(cs, c, u0, T_target, opt);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (backend == Backend::openmp) {
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(n); ++i) run(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < n; ++i) run(i);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  LimitReport r;
  r.eps = eps_list;
  r.T_star = T_target;
  for (const auto& x : runs) {
    r.horizons.push_back(x->horizon);
    r.T_star = std::min(r.T_star, x->horizon);
  }
  auto nstar = static_cast<std::size_t>(std::llround(r.T_star / base.dt));
  double s = base.s;
  for (const auto& x : runs) {
    double m = 0.0;
    for (std::size_t k = 0; k <= nstar; ++k) m = std::max(m, sobolev_norm(x->solution.trajectory[k], s));
    r.hs_bounds.push_back(m);
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const auto& a = runs[i]->solution.trajectory;
    const auto& b = runs[i + 1]->solution.trajectory;
    double d2 = 0.0, d1 = 0.0;
    for (std::size_t k = 0; k <= nstar; ++k) {
      StateField w = a[k] - b[k];
      d2 = std::max(d2, l2_norm(w));
      d1 = std::max(d1, sobolev_norm(w, s - 1.0));
    }
    r.gaps.push_back(eps_list[i] - eps_list[i + 1]);
    r.l2_diffs.push_back(d2);
    r.hs1_direct.push_back(d1);
    double theta = s > 0.0 ? 1.0 / s : 1.0;
    r.hs1_interp.push_back(std::pow(d2, theta) * std::pow(r.hs_bounds[i] + r.hs_bounds[i + 1], 1.0 - theta));
  }
  bool all_zero = *std::max_element(r.l2_diffs.begin(), r.l2_diffs.end()) == 0.0;
  bool positive = *std::min_element(r.l2_diffs.begin(), r.l2_diffs.end()) > 0.0;
  r.slope = positive ? fit_loglog_slope(r.gaps, r.l2_diffs) : std::numeric_limits<double>::quiet_NaN();
  r.monotone = true;
  for (std::size_t i = 0; i + 1 < r.hs1_interp.size(); ++i)
    r.monotone = r.monotone && r.hs1_interp[i + 1] <= r.hs1_interp[i] && r.l2_diffs[i + 1] <= r.l2_diffs[i];
  r.limit_epsilon = eps_list.back();
  r.report.name = "vanishing_viscosity";
  r.report.values["cauchy_slope"] = r.slope;
  r.report.values["T_star"] = r.T_star;
  if (all_zero) r.report.notes["differences"] = "all differences vanish";
  if (!r.monotone) r.report.notes["monotone"] = "non-monotone Cauchy differences";
  r.report.pass = all_zero || (positive && r.slope >= 0.8 && r.slope <= 1.2 && r.monotone);
  return r;
}

FailingHorizon failing_horizon(const CoefficientSet& cs, SolverConfig cfg, const StateField& v0, double T0,
                               double T_max, int steps_per_window, int bisection_steps) {
  if (!(T0 > 0.0) || !(T_max >= T0) || steps_per_window < 1) throw ConfigError("failing_horizon: bad bracket");
  FailingHorizon fh;
  auto works = [&](double T) {
    cfg.T = T;
    cfg.dt = T / steps_per_window;
    try {
      picard_solve(cs, cfg, v0);
      return true;
    } catch (const ComputationError& e) {
      fh.reason = e.what();
      return false;
    }
  };
  double T = T0;
  if (works(T)) {
    fh.T_ok = T;
    while (true) {
      T *= 2.0;
      if (T > T_max) {
        fh.T_fail = std::numeric_limits<double>::infinity();
        fh.reason = "no failure below T_max";
        return fh;
      }
      if (!works(T)) break;
      fh.T_ok = T;
    }
    fh.T_fail = T;
  } else {
    fh.T_fail = T;
    for (int i = 0; i < 30; ++i) {
      T *= 0.5;
      if (works(T)) break;
      fh.T_fail = T;
    }
    fh.T_ok = T;
    if (fh.T_ok == fh.T_fail) throw ComputationError("failing_horizon: no contracting window found");
  }
  for (int i = 0; i < bisection_steps; ++i) {
    double mid = std::sqrt(fh.T_ok * fh.T_fail);
    if (works(mid)) {
      fh.T_ok = mid;
    } else {
      fh.T_fail = mid;
    }
  }
  return fh;
}

// ---------------------------------------------------------------------------

std::vector<BoundSample> nonlinear_bound_corpus(const CoefficientSet& cs, const std::vector<StateField>& us,
                                                const std::vector<StateField>& vs,
                                                const std::vector<double>& lambdas, double s) {
  std::vector<BoundSample> out;
  for (const auto& u : us)
    for (const auto& v : vs)
      for (double lam : lambdas) {
        StateField U = u, V = v;
        U *= lam;
        V *= lam;
        BoundSample b;
        b.lambda = lam;
        b.u_hs = sobolev_norm(U, s);
        b.v_hs = sobolev_norm(V, s);
        b.measured = sobolev_norm(state_operator(cs, U, V, 0.0), s - 2.0);
        out.push_back(b);
      }
  return out;
}

PowerFit fit_nonlinear_bound(const std::vector<BoundSample>& samples, int P_max, double tol) {
  if (samples.empty()) throw ConfigError("fit_nonlinear_bound: empty corpus");
  PowerFit best;
  double best_spread = std::numeric_limits<double>::infinity();
  double best_lo = 0.0, best_hi = 0.0;
  for (int P = 1; P <= P_max; ++P) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& b : samples) {
      if (b.measured <= 0.0) continue;
      double model = b.v_hs * (1.0 + b.u_hs + std::pow(b.u_hs, P));
      double rho = b.measured / model;
      lo = std::min(lo, rho);
      hi = std::max(hi, rho);
    }
    if (!(hi > 0.0)) continue;
    double spread = std::log(hi / lo);
    if (spread < best_spread - 1e-12) {
      best_spread = spread;
      best.P = P;
      best_lo = lo;
      best_hi = hi;
    }
  }
  best.report.name = "nonlinear_bound_fit";
  if (best.P == 0) {
    best.report.notes["corpus"] = "all measured values vanish";
    best.report.pass = true;
    return best;
  }
  best.C = std::sqrt(best_lo * best_hi);
  best.max_violation = std::sqrt(best_hi / best_lo) - 1.0;
  best.report.values["C"] = best.C;
  best.report.values["P"] = best.P;
  best.report.values["max_violation"] = best.max_violation;
  best.report.values["samples"] = static_cast<double>(samples.size());
  best.report.pass = best.max_violation < tol;
  return best;
}

}  // namespace qls
