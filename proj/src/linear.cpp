#include "qls/linear.hpp"

#include <algorithm>
#include <limits>

namespace qls {

FieldPair& FieldPair::operator+=(const FieldPair& o) {
  u += o.u;
  v += o.v;
  return *this;
}

FieldPair& FieldPair::operator-=(const FieldPair& o) {
  u -= o.u;
  v -= o.v;
  return *this;
}

FieldPair& FieldPair::operator*=(cplx s) {
  u *= s;
  v *= s;
  return *this;
}

FieldPair operator+(FieldPair a, const FieldPair& b) { return a += b; }
FieldPair operator-(FieldPair a, const FieldPair& b) { return a -= b; }

double l2_norm(const FieldPair& w) {
  double a = l2_norm(w.u), b = l2_norm(w.v);
  return std::sqrt(a * a + b * b);
}

FieldPair conjugate_pair(const StateField& u) { return {u, u.conj()}; }

namespace {

bool is_zero(const StateField& f, cplx shift = 0.0) {
  for (const auto& v : f.values())
    if (v != shift) return false;
  return true;
}

StateField grad_dot(const std::array<StateField, 2>& b, const StateField& u, bool conj_b = false) {
  const Grid& g = u.grid();
  StateField out(g, u.time());
  for (int j = 0; j < g.dim(); ++j) {
    if (is_zero(b[j])) continue;
    StateField du = partial(u, j);
    for (std::size_t i = 0; i < g.size(); ++i) out[i] += (conj_b ? std::conj(b[j][i]) : b[j][i]) * du[i];
  }
  return out;
}

}  // namespace

LinearSystem::LinearSystem(FrozenLinearCoefficients fz, double eps) : frozen(std::move(fz)), epsilon(eps) {
  if (!(eps >= 0.0)) throw ConfigError("epsilon must be nonnegative");
}

StateField LinearSystem::forcing_at(double t) const {
  if (forcing) {
    StateField f = forcing(t);
    require_same_grid(f.grid(), grid(), "forcing");
    return f;
  }
  StateField f = frozen.f;
  f.set_time(t);
  return f;
}

LinearSystem free_system(const Grid& g, double eps) {
  FrozenLinearCoefficients fz(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    fz.a[0][i] = 1.0;
    if (g.dim() == 2) fz.a[2][i] = 1.0;
  }
  return LinearSystem(std::move(fz), eps);
}

LinearSystem linear_system_from_state(const CoefficientSet& cs, const StateField& u, double t, double eps) {
  FrozenLinearCoefficients fz = freeze_at_state(cs, u, t);
  const Grid& g = u.grid();
  const cplx I(0.0, 1.0);
  if (g.dim() == 1) {
    StateField d = partial(fz.a[0], 0);
    fz.b1[0].axpy(-I, d);
  } else {
    StateField d00 = partial(fz.a[0], 0), d01x = partial(fz.a[1], 0);
    StateField d01y = partial(fz.a[1], 1), d11 = partial(fz.a[2], 1);
    fz.b1[0].axpy(-I, d00);
    fz.b1[0].axpy(-I, d01y);
    fz.b1[1].axpy(-I, d01x);
    fz.b1[1].axpy(-I, d11);
  }
  return LinearSystem(std::move(fz), eps);
}

StateField metric_deviation_part(const FrozenLinearCoefficients& fz, const StateField& u) {
  const Grid& g = fz.grid;
  const cplx I(0.0, 1.0);
  if (g.dim() == 1) {
    StateField du = partial(u, 0);
    for (std::size_t i = 0; i < g.size(); ++i) du[i] *= fz.a[0][i] - 1.0;
    StateField out = partial(du, 0);
    out *= I;
    return out;
  }
  StateField d0 = partial(u, 0), d1 = partial(u, 1);
  StateField f0(g, u.time()), f1(g, u.time());
  for (std::size_t i = 0; i < g.size(); ++i) {
    f0[i] = (fz.a[0][i] - 1.0) * d0[i] + fz.a[1][i] * d1[i];
    f1[i] = fz.a[1][i] * d0[i] + (fz.a[2][i] - 1.0) * d1[i];
  }
  StateField out = partial(f0, 0) + partial(f1, 1);
  out *= I;
  return out;
}

StateField divergence_operator(const FrozenLinearCoefficients& fz, const StateField& u) {
  StateField dev = metric_deviation_part(fz, u);
  dev *= cplx(0.0, -1.0);
  return laplacian(u) + dev;
}

StateField lower_order_part(const FrozenLinearCoefficients& fz, const StateField& u) {
  const Grid& g = fz.grid;
  StateField ub = u.conj();
  StateField out = grad_dot(fz.b1, u) + grad_dot(fz.b2, ub);
  for (std::size_t i = 0; i < g.size(); ++i) out[i] += fz.c1[i] * u[i] + fz.c2[i] * ub[i];
  return out;
}

StateField linear_rhs(const LinearSystem& sys, const StateField& u, double t) {
  require_same_grid(u.grid(), sys.grid(), "linear_rhs");
  double eps = sys.epsilon;
  StateField out = apply_multiplier(u, [eps](const Vec& k) {
    double k2 = dot(k, k);
    return cplx(-eps * k2 * k2, -k2);
  });
  out += metric_deviation_part(sys.frozen, u);
  out += lower_order_part(sys.frozen, u);
  out += sys.forcing_at(t);
  out.set_time(t);
  return out;
}

Trajectory evolve(const LinearSystem& sys, const StateField& u0, double T, double dt, int save_every) {
  require_same_grid(u0.grid(), sys.grid(), "evolve");
  if (!(dt > 0.0) || !(T >= 0.0)) throw ConfigError("evolve: need dt > 0 and T >= 0");
  if (save_every < 1) throw ConfigError("evolve: save_every must be >= 1");
  long long steps = std::llround(T / dt);
  if (std::abs(steps * dt - T) > 1e-9 * std::max(1.0, T)) throw ConfigError("evolve: T must be a multiple of dt");
  u0.require_finite("evolve");
  const Grid& g = sys.grid();
  const FrozenLinearCoefficients& fz = sys.frozen;

  std::vector<cplx> half(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec k = g.frequency(i);
    double k2 = dot(k, k);
    half[i] = std::exp(0.5 * dt * cplx(-sys.epsilon * k2 * k2, -k2));
  }
  auto multiplier_step = [&](StateField& u) {
    Spectrum c = forward_transform(u);
    for (std::size_t i = 0; i < g.size(); ++i) c[i] *= half[i];
    u = inverse_transform(c, u.time());
  };

  bool metric_flat = is_zero(fz.a[0], 1.0) && is_zero(fz.a[1]) && (g.dim() == 1 || is_zero(fz.a[2], 1.0));
  bool lower_zero = true;
  for (const auto* f : {&fz.b1[0], &fz.b1[1], &fz.b2[0], &fz.b2[1], &fz.c1, &fz.c2})
    lower_zero = lower_zero && is_zero(*f);
  bool forcing_zero = !sys.forcing && is_zero(fz.f);
  // i k_j with the Nyquist mode of axis j removed, as in partial().
  std::array<std::vector<cplx>, 2> ik;
  for (int j = 0; j < g.dim(); ++j) {
    ik[j].resize(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
      ik[j][i] = g.is_nyquist(g.unflat(i)[j]) ? cplx(0.0) : cplx(0.0, g.frequency(i)[j]);
  }
  bool b2_zero = is_zero(fz.b2[0]) && is_zero(fz.b2[1]);
  // One gradient serves the metric and lower-order terms.
  auto G = [&](const StateField& u, double t) {
    StateField out(g, t);
    if (!metric_flat || !lower_zero) {
      const int dim = g.dim();
      Spectrum c = forward_transform(u);
      std::array<StateField, 2> d{StateField(g), StateField(g)};
      for (int j = 0; j < dim; ++j) {
        Spectrum cj = c;
        for (std::size_t i = 0; i < g.size(); ++i) cj[i] *= ik[j][i];
        d[j] = inverse_transform(cj);
      }
      if (!metric_flat) {
        Spectrum acc(g);
        for (int j = 0; j < dim; ++j) {
          StateField fj(g);
          for (std::size_t i = 0; i < g.size(); ++i) {
            Mat2 a = fz.a_at(i);
            cplx v = (a(j, 0) - (j == 0 ? 1.0 : 0.0)) * d[0][i];
            if (dim == 2) v += (a(j, 1) - (j == 1 ? 1.0 : 0.0)) * d[1][i];
            fj[i] = v;
          }
          Spectrum cf = forward_transform(fj);
          for (std::size_t i = 0; i < g.size(); ++i) acc[i] += ik[j][i] * cf[i];
        }
        out = inverse_transform(acc, t);
        out *= cplx(0.0, 1.0);
      }
      if (!lower_zero) {
        for (std::size_t i = 0; i < g.size(); ++i) {
          cplx v = fz.c1[i] * u[i] + fz.c2[i] * std::conj(u[i]);
          for (int j = 0; j < dim; ++j) {
            v += fz.b1[j][i] * d[j][i];
            if (!b2_zero) v += fz.b2[j][i] * std::conj(d[j][i]);
          }
          out[i] += v;
        }
      }
    }
    if (!forcing_zero) out += sys.forcing_at(t);
    return out;
  };
  bool explicit_zero = metric_flat && lower_zero && forcing_zero;

  double ref = l2_norm(u0);
  if (!forcing_zero) ref = std::max(ref, std::max(1.0, T) * l2_norm(sys.forcing_at(u0.time())));
  ref = std::max(ref, std::numeric_limits<double>::min());

  Trajectory tr(dt * save_every);
  StateField u = u0;
  double t0 = u0.time();
  tr.push(u);
  for (long long n = 0; n < steps; ++n) {
    double t = t0 + n * dt;
    multiplier_step(u);
    if (!explicit_zero) {
      StateField mid = u;
      mid.axpy(0.5 * dt, G(u, t));
      u.axpy(dt, G(mid, t + 0.5 * dt));
    }
    multiplier_step(u);
    u.set_time(t0 + (n + 1) * dt);
    double nu = l2_norm(u);
    if (!std::isfinite(nu)) throw ComputationError("evolve: non-finite state at t = " + std::to_string(u.time()));
    if (nu > 1e6 * ref)
      throw ComputationError("evolve: blow-up guard, ||u||_2 = " + std::to_string(nu) + " at t = " +
                             std::to_string(u.time()) + " (reference " + std::to_string(ref) + ")");
    if ((n + 1) % save_every == 0) tr.push(u);
  }
  return tr;
}

StateField wave_packet(const Grid& g, const Vec& center, const Vec& k, double width) {
  if (!(width > 0.0)) throw ConfigError("wave packet width must be positive");
  double L = g.half_length();
  return StateField::sample(g, [&](const Vec& x) {
    Vec d{periodic_offset(x[0] - center[0], L), g.dim() == 2 ? periodic_offset(x[1] - center[1], L) : 0.0};
    return std::exp(cplx(-dot(d, d) / (2.0 * width * width), dot(k, x)));
  });
}

// ---------------------------------------------------------------------------

VectorSystem build_vector_system(const LinearSystem& sys) { return VectorSystem{sys.frozen, sys.epsilon}; }

FieldPair VectorSystem::H(const FieldPair& w) const {
  double eps = epsilon;
  auto visc = [eps](const Vec& k) {
    double k2 = dot(k, k);
    return cplx(-eps * k2 * k2);
  };
  const cplx I(0.0, 1.0);
  StateField a = divergence_operator(frozen, w.u);
  a *= I;
  a += apply_multiplier(w.u, visc);
  StateField b = divergence_operator(frozen, w.v);
  b *= -I;
  b += apply_multiplier(w.v, visc);
  return {a, b};
}

StateField VectorSystem::B12(const StateField& v) const { return grad_dot(frozen.b2, v); }
StateField VectorSystem::B21(const StateField& u) const { return grad_dot(frozen.b2, u, true); }

FieldPair VectorSystem::B(const FieldPair& w) const {
  return {grad_dot(frozen.b1, w.u) + B12(w.v), B21(w.u) + grad_dot(frozen.b1, w.v, true)};
}

FieldPair VectorSystem::C(const FieldPair& w) const {
  const Grid& g = frozen.grid;
  FieldPair out{StateField(g, w.u.time()), StateField(g, w.v.time())};
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.u[i] = frozen.c1[i] * w.u[i] + frozen.c2[i] * w.v[i];
    out.v[i] = std::conj(frozen.c2[i]) * w.u[i] + std::conj(frozen.c1[i]) * w.v[i];
  }
  return out;
}

FieldPair VectorSystem::apply(const FieldPair& w) const { return H(w) + B(w) + C(w); }

// ---------------------------------------------------------------------------

QuantizedOperator tilde_L(const FrozenLinearCoefficients& fz, double R) {
  const Grid& g = fz.grid;
  auto theta = cutoff_theta(g.dim(), R);
  bool flat = is_zero(fz.a[0], 1.0) && is_zero(fz.a[1]) && (g.dim() == 1 || is_zero(fz.a[2], 1.0));
  if (flat) {
    Symbol q = multiplier_symbol(
        g.dim(), -2.0,
        [theta](const Vec& xi) {
          double th = theta(Vec{}, xi).real();
          return th == 0.0 ? cplx(0.0) : cplx(-th / dot(xi, xi));
        },
        nullptr, "tildeL");
    return QuantizedOperator(q, g, OperatorKind::multiplier);
  }
  MetricField m = fz.metric();
  Symbol q(
      g.dim(), -2.0,
      [theta, m](const Vec& x, const Vec& xi, double) {
        double th = theta(x, xi).real();
        if (th == 0.0) return cplx(0.0);
        return cplx(-th / m.value(x, 0.0).quad(xi));
      },
      "tildeL");
  return QuantizedOperator(q, g, OperatorKind::general);
}

EstimateReport tilde_l_check(const FrozenLinearCoefficients& fz, double R, const std::vector<int>& modes) {
  EstimateReport rep("tilde_L_parametrix");
  auto tl = tilde_L(fz, R);
  std::vector<double> dev;
  for (int m : modes) {
    StateField e = StateField::plane_wave(fz.grid, m);
    StateField y = tl.apply(divergence_operator(fz, e));
    double d = l2_norm(y - e) / l2_norm(e);
    dev.push_back(d);
    rep.values["deviation_k" + std::to_string(m)] = d;
  }
  rep.pass = !dev.empty() && (dev.back() < 1e-10 || dev.back() < dev.front());
  return rep;
}

FieldPair Diagonalization::S(const FieldPair& w) const {
  const Grid& g = system.frozen.grid;
  if (!tl) return {StateField(g, w.u.time()), StateField(g, w.v.time())};
  const cplx half_i(0.0, 0.5);
  StateField a = system.B12(tl->apply(w.v));
  a *= half_i;
  StateField b = system.B21(tl->apply(w.u));
  b *= -half_i;
  return {a, b};
}

FieldPair Diagonalization::lambda(const FieldPair& w) const { return w - S(w); }

FieldPair Diagonalization::lambda_inverse(const FieldPair& w, int* terms) const {
  if (!tl) {
    if (terms) *terms = 0;
    return w;
  }
  return neumann_inverse_apply(
      [this](const FieldPair& x) { return S(x); }, w, neumann_tol, neumann_max, terms);
}

FieldPair Diagonalization::transformed(const FieldPair& w) const { return lambda(system.apply(lambda_inverse(w))); }

Diagonalization diagonalize(const VectorSystem& sys, double R) {
  if (!(R > 0.0)) throw ConfigError("diagonalize: R must be positive");
  Diagonalization d{sys, R, std::nullopt};
  bool b2_zero = is_zero(sys.frozen.b2[0]) && is_zero(sys.frozen.b2[1]);
  if (b2_zero) return d;
  d.tl = tilde_L(sys.frozen, R);
  const Grid& g = sys.frozen.grid;
  unsigned seed = 7;
  d.S_norm = estimate_operator_norm<FieldPair>(
      [&d](const FieldPair& x) { return d.S(x); },
      [&]() { return FieldPair{StateField::random(g, seed), StateField::random(g, seed + 1)}; }, 30);
  if (!(d.S_norm < 0.5))
    throw ComputationError("diagonalize: ||S|| = " + std::to_string(d.S_norm) + " >= 1/2 at R = " +
                           std::to_string(R) + ", increase R");
  return d;
}

Diagonalization diagonalize_auto(const VectorSystem& sys, double R0, int max_doublings) {
  double R = R0;
  for (int i = 0; i <= max_doublings; ++i, R *= 2.0) {
    try {
      return diagonalize(sys, R);
    } catch (const ComputationError&) {
      if (i == max_doublings) throw;
    }
  }
  throw ComputationError("diagonalize: no admissible R");
}

EstimateReport antidiagonal_residual(const Diagonalization& d, const std::vector<int>& modes) {
  EstimateReport rep("antidiagonal_residual");
  const Grid& g = d.system.frozen.grid;
  std::vector<double> ks, raw, tr;
  for (int m : modes) {
    StateField e = StateField::plane_wave(g, m);
    StateField z(g);
    double ne = l2_norm(e);
    FieldPair p1{z, e}, p2{e, z};
    double r = std::max(l2_norm(d.system.apply(p1).u), l2_norm(d.system.apply(p2).v)) / ne;
    double t = std::max(l2_norm(d.transformed(p1).u), l2_norm(d.transformed(p2).v)) / ne;
    ks.push_back(std::abs(g.frequency_step() * m));
    raw.push_back(r);
    tr.push_back(t);
    rep.values["raw_k" + std::to_string(m)] = r;
    rep.values["transformed_k" + std::to_string(m)] = t;
  }
  auto slope = [&](const std::vector<double>& y) {
    if (*std::max_element(y.begin(), y.end()) < 1e-13) return 0.0;
    std::vector<double> yy(y);
    for (auto& v : yy) v = std::max(v, 1e-300);
    return fit_loglog_slope(ks, yy);
  };
  rep.values["raw_exponent"] = slope(raw);
  rep.values["transformed_exponent"] = slope(tr);
  rep.values["R"] = d.R;
  rep.values["S_norm"] = d.S_norm;
  rep.pass = rep.values["transformed_exponent"] < 0.5;
  return rep;
}

double lambda_roundtrip(const Diagonalization& d, const std::vector<StateField>& corpus) {
  double worst = 0.0;
  for (const auto& f : corpus) {
    FieldPair w = conjugate_pair(f);
    double n = l2_norm(w);
    if (n == 0.0) continue;
    worst = std::max(worst, l2_norm(d.lambda_inverse(d.lambda(w)) - w) / n);
  }
  return worst;
}

// ---------------------------------------------------------------------------

GaugeOperator gauge_operator(const Grid& g, const Symbol& gamma, double R, double C0tilde) {
  if (gamma.dim() != g.dim()) throw ConfigError("gauge: symbol and grid dimensions differ");
  Symbol phase = cplx(C0tilde) * (cutoff_theta(g.dim(), R) * gamma);
  GaugeOperator op;
  op.q1.emplace(exp(phase).relabeled("q1"), g);
  op.q2.emplace(exp(cplx(-1.0) * phase).relabeled("q2"), g);
  return op;
}

GaugeOperator gauge_operator(const LinearSystem& sys) {
  if (!sys.gauge.gamma) throw ConfigError("gauge: system has no gamma symbol");
  return gauge_operator(sys.grid(), *sys.gauge.gamma, sys.gauge.R, sys.gauge.C0tilde);
}

FieldPair GaugeOperator::apply(const FieldPair& w) const { return {q1->apply(w.u), q2->apply(w.v)}; }

FieldPair GaugeOperator::inverse(const FieldPair& w, int* terms) const {
  // Psi_q1 x = g with x = Psi_q2 y and y = sum (I - Psi_q1 Psi_q2)^j g; likewise for q2.
  int t1 = 0, t2 = 0;
  auto solve = [&](const QuantizedOperator& A, const QuantizedOperator& P, const StateField& g, int* used) {
    auto S = [&](const StateField& y) { return y - A.apply(P.apply(y)); };
    return P.apply(neumann_inverse_apply(S, g, tol, max_terms, used));
  };
  FieldPair out{solve(*q1, *q2, w.u, &t1), solve(*q2, *q1, w.v, &t2)};
  if (terms) *terms = std::max(t1, t2);
  return out;
}

EstimateReport gauge_roundtrip(const GaugeOperator& op, const std::vector<StateField>& corpus) {
  EstimateReport rep("gauge_roundtrip");
  double worst = 0.0;
  int terms = 0;
  for (const auto& f : corpus) {
    FieldPair w = conjugate_pair(f);
    double n = l2_norm(w);
    if (n == 0.0) continue;
    int t = 0;
    worst = std::max(worst, l2_norm(op.inverse(op.apply(w), &t) - w) / n);
    terms = std::max(terms, t);
  }
  rep.values["max_residual"] = worst;
  rep.values["neumann_terms"] = terms;
  rep.notes["q1_kind"] = to_string(op.q1->kind());
  rep.pass = worst < 1e-6;
  return rep;
}

// ---------------------------------------------------------------------------

json AprioriReport::to_json() const {
  return json{{"lhs", lhs},
              {"rhs_data", rhs_data},
              {"A", A},
              {"T", T},
              {"sup_l2_sq", sup_l2_sq},
              {"smoothing_sq", smoothing_sq},
              {"cube_smoothing_sq", cube_smoothing_sq}};
}

AprioriReport apriori_report(const Trajectory& tr, const CubePartition& part, double T,
                             const std::vector<double>& fnorms) {
  if (tr.empty()) throw ConfigError("apriori_report: empty trajectory");
  if (!fnorms.empty() && fnorms.size() != tr.size())
    throw ConfigError("apriori_report: forcing norms must match the frames");
  AprioriReport r;
  r.T = T;
  Trajectory half(tr.dt());
  double t0 = tr[0].time();
  for (const auto& f : tr.frames()) {
    if (f.time() <= t0 + T + 1e-9 * std::max(1.0, T)) r.sup_l2_sq = std::max(r.sup_l2_sq, std::pow(l2_norm(f), 2));
    half.push(bessel_potential(f, 0.5));
  }
  auto cubes = cube_space_time_norms(half, part, T);
  for (double c : cubes) {
    r.cube_smoothing_sq.push_back(c * c);
    r.smoothing_sq = std::max(r.smoothing_sq, c * c);
  }
  r.lhs = r.sup_l2_sq + r.smoothing_sq;
  double u0 = l2_norm(tr[0]);
  double fint = fnorms.empty() ? 0.0 : trapezoid_to(fnorms, tr.dt(), T);
  r.rhs_data = u0 * u0 + fint * fint;
  if (r.rhs_data > 0.0) {
    r.A = r.lhs / r.rhs_data;
  } else {
    r.A = r.lhs == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return r;
}

std::vector<double> forcing_norms(const LinearSystem& sys, const Trajectory& tr) {
  std::vector<double> out;
  for (const auto& f : tr.frames()) out.push_back(l2_norm(sys.forcing_at(f.time())));
  return out;
}

}  // namespace qls
