#include "qls/doi.hpp"

#include <algorithm>
#include <limits>

#include "qls/kernels.hpp"

namespace qls {

namespace {

constexpr int bisection_steps = 40;

struct SamplePoint {
  Vec x;
  Vec xi;
};

inline SamplePoint point_at(const SymbolSample& s, std::size_t idx) {
  std::size_t nxi = s.xis.size();
  return {s.xs[idx / nxi], s.xis[idx % nxi]};
}

std::vector<double> bracket_values(const Symbol& h, const Symbol& p, const SymbolSample& s) {
  Symbol hp = poisson_bracket(h, p);
  std::vector<double> out(s.size());
  kernels::sweep(default_backend(), [&](std::size_t i) {
    auto pt = point_at(s, i);
    cplx v = hp(pt.x, pt.xi);
    if (!std::isfinite(v.real())) throw ComputationError("bracket evaluation produced a non-finite value");
    return v.real();
  }, out);
  return out;
}

void note_point(EstimateReport& rep, const std::string& key, const SamplePoint& p) {
  rep.notes[key] = "x=" + format_vec(p.x[0], p.x[1]) + " xi=" + format_vec(p.xi[0], p.xi[1]);
  rep.values[key + "_x0"] = p.x[0];
  rep.values[key + "_x1"] = p.x[1];
  rep.values[key + "_xi0"] = p.xi[0];
  rep.values[key + "_xi1"] = p.xi[1];
}

}  // namespace

EscapeSymbol flat_escape_symbol(int dim, double R_cut) {
  if (R_cut < 1.0) throw ConfigError("flat escape symbol needs R_cut >= 1");
  Symbol theta = cutoff_theta(dim, R_cut);
  auto eval = [theta](const Vec& x, const Vec& xi, double) {
    double r = norm(xi);
    if (r == 0.0) return cplx(0.0);
    double th = theta(x, xi).real();
    if (th == 0.0) return cplx(0.0);
    return cplx(th * std::atan(dot(x, xi) / r));
  };
  auto dx = [theta](const Vec& x, const Vec& xi, double) {
    double r = norm(xi);
    if (r == 0.0) return CVec{0.0, 0.0};
    double th = theta(x, xi).real();
    double s = dot(x, xi) / r;
    double c = th / (1.0 + s * s) / r;
    return CVec{c * xi[0], c * xi[1]};
  };
  auto dxi = [theta](const Vec& x, const Vec& xi, double) {
    double r = norm(xi);
    if (r == 0.0) return CVec{0.0, 0.0};
    double th = theta(x, xi).real();
    CVec dth = theta.grad_xi(x, xi);
    double s = dot(x, xi) / r;
    double at = std::atan(s);
    double c = th / ((1.0 + s * s) * r);
    CVec out;
    for (int i = 0; i < 2; ++i) out[i] = dth[i] * at + c * (x[i] - s * xi[i] / r);
    return out;
  };
  EscapeSymbol e{Symbol(dim, 0.0, eval, "flat-escape").with_gradients(dx, dxi), {0.0, 0.0}, 0.0, {}};
  e.report.name = "flat_escape_symbol";
  e.report.pass = true;
  e.report.values["R_cut"] = R_cut;
  return e;
}

SymbolSample default_doi_sample(int dim, double L, double R_cut, double xi_max, int nx, int n_mag,
                                int n_dir) {
  return SymbolSample::box(dim, 0.5 * L, nx, 2.0 * R_cut, xi_max, n_mag, n_dir);
}

EstimateReport flat_identity_check(const EscapeSymbol& r, const SymbolSample& sample, double R_cut) {
  int dim = r.symbol.dim();
  Symbol theta = cutoff_theta(dim, R_cut);
  auto vals = bracket_values(flat_hamiltonian(dim), r.symbol, sample);
  double max_abs_err = 0.0, max_rel_err = 0.0, min_excess = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    auto pt = point_at(sample, i);
    double k = norm(pt.xi);
    double s = dot(pt.x, pt.xi) / k;
    double exact = 2.0 * theta(pt.x, pt.xi).real() * k / (1.0 + s * s);
    double err = std::abs(vals[i] - exact);
    max_abs_err = std::max(max_abs_err, err);
    max_rel_err = std::max(max_rel_err, err / std::max(1.0, std::abs(exact)));
    if (k >= 2.0 * R_cut) min_excess = std::min(min_excess, vals[i] - 2.0 * k / (1.0 + dot(pt.x, pt.x)));
  }
  EstimateReport rep;
  rep.name = "flat_identity";
  rep.values["max_abs_error"] = max_abs_err;
  rep.values["max_rel_error"] = max_rel_err;
  rep.values["min_excess_over_weight"] = min_excess;
  rep.pass = max_rel_err < 1e-10 && min_excess >= -1e-10;
  return rep;
}

EstimateReport verify_lower_bound(const Symbol& h, const Symbol& p, const SymbolSample& sample,
                                  double xi_min) {
  auto H = bracket_values(h, p, sample);
  std::vector<double> Hs, W;
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < H.size(); ++i) {
    auto pt = point_at(sample, i);
    double k = norm(pt.xi);
    if (k < xi_min) continue;
    Hs.push_back(H[i]);
    W.push_back(k / (1.0 + dot(pt.x, pt.x)));
    ids.push_back(i);
  }
  if (Hs.empty()) throw ConfigError("verify_lower_bound: no sample points with |xi| >= xi_min");
  auto F = [&](double B, std::size_t* arg) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < Hs.size(); ++i) {
      double v = Hs[i] - B * W[i] + 1.0 / B;
      if (v < m) {
        m = v;
        if (arg) *arg = i;
      }
    }
    return m;
  };
  double B;
  if (F(1.0, nullptr) >= 0.0) {
    B = 1.0;
  } else {
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < bisection_steps; ++it) {
      double mid = 0.5 * (lo + hi);
      if (F(mid, nullptr) >= 0.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    B = lo;
  }
  EstimateReport rep;
  rep.name = "lower_bound";
  rep.values["B_star"] = B;
  rep.values["xi_min"] = xi_min;
  std::size_t worst = 0;
  F(B > 0.0 ? B : 1e-12, &worst);
  note_point(rep, "worst", point_at(sample, ids[worst]));
  rep.pass = B > 0.01;
  return rep;
}

EstimateReport verify_bump_bound(const Symbol& h, const Symbol& p_mu, const Vec& x_mu,
                                 const SymbolSample& sample, const BumpBoundOptions& opt) {
  auto H = bracket_values(h, p_mu, sample);
  std::size_t n = H.size();
  std::vector<double> w1(n), w2(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto pt = point_at(sample, i);
    double k = norm(pt.xi);
    Vec y = pt.x - x_mu;
    w1[i] = k / (1.0 + dot(y, y));
    w2[i] = k / (1.0 + dot(pt.x, pt.x));
  }
  double c1max = std::numeric_limits<double>::infinity();
  std::size_t arg1 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = (H[i] + opt.c3) / w1[i];
    if (v < c1max) {
      c1max = v;
      arg1 = i;
    }
  }
  double c1 = (1.0 - opt.margin) * c1max;
  double c2 = std::numeric_limits<double>::infinity();
  std::size_t arg2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double v = (H[i] - c1 * w1[i] + opt.c3) / w2[i];
    if (v < c2) {
      c2 = v;
      arg2 = i;
    }
  }
  EstimateReport rep;
  rep.name = "bump_bound";
  rep.values["C1"] = c1;
  rep.values["C1_max"] = c1max;
  rep.values["C2"] = c2;
  rep.values["C3"] = opt.c3;
  rep.values["center_x0"] = x_mu[0];
  rep.values["center_x1"] = x_mu[1];
  bool ok1 = c1 > opt.threshold;
  bool ok2 = c2 >= opt.threshold;
  rep.pass = ok1 && ok2;
  note_point(rep, "worst", point_at(sample, ok1 ? arg2 : arg1));
  if (!ok1) rep.notes["failure"] = "C1 not positive";
  else if (!ok2) rep.notes["failure"] = "C2 below threshold";
  return rep;
}

EscapeSymbol uncentered_symbol(const EscapeSymbol& p, const EscapeSymbol& r, const Vec& x_mu,
                               const Symbol& h, int N_max, const SymbolSample& sample,
                               const BumpBoundOptions& opt) {
  if (N_max < 0) throw ConfigError("N_max must be nonnegative");
  Symbol r_mu = shifted(r.symbol, x_mu);
  EstimateReport last;
  for (int N = 0; N <= N_max; ++N) {
    Symbol p_mu = N == 0 ? r_mu : cplx(static_cast<double>(N)) * p.symbol + r_mu;
    auto rep = verify_bump_bound(h, p_mu, x_mu, sample, opt);
    rep.values["N"] = N;
    if (rep.pass) {
      rep.name = "uncentered_symbol";
      return {p_mu.relabeled("p_mu"), x_mu, static_cast<double>(N), rep};
    }
    last = rep;
  }
  std::string where = last.notes.count("worst") ? last.notes.at("worst") : "?";
  throw ComputationError("perturbation too large for flat r: no N <= " + std::to_string(N_max) +
                         " works; worst point " + where);
}

EstimateReport time_stability_horizon(const MetricField& a, const EscapeSymbol& p_mu,
                                      const SymbolSample& sample, double budget_coeff, double t_max) {
  if (!p_mu.report.pass) throw ComputationError("time_stability_horizon: bound not verified at t = 0");
  if (!(budget_coeff > 0.0)) throw ConfigError("time_stability_horizon: budget must be positive");
  std::size_t nx = sample.xs.size(), nxi = sample.xis.size(), n = sample.size();
  // Derivatives of p_mu once per sample point.
  std::vector<double> px0(n), px1(n), pk0(n), pk1(n);
  std::vector<double> dummy(n);
  kernels::sweep(default_backend(), [&](std::size_t i) {
    auto pt = point_at(sample, i);
    CVec gx = p_mu.symbol.grad_x(pt.x, pt.xi), gk = p_mu.symbol.grad_xi(pt.x, pt.xi);
    px0[i] = gx[0].real();
    px1[i] = gx[1].real();
    pk0[i] = gk[0].real();
    pk1[i] = gk[1].real();
    return 0.0;
  }, dummy);
  std::vector<Mat2> a0(nx);
  std::vector<std::array<Mat2, 2>> g0(nx);
  for (std::size_t j = 0; j < nx; ++j) {
    a0[j] = a.value(sample.xs[j], 0.0);
    g0[j] = a.gradient(sample.xs[j], 0.0);
  }
  auto worst_ratio = [&](double t) {
    std::vector<double> per_x(nx);
    kernels::sweep(default_backend(), [&](std::size_t j) {
      const Vec& x = sample.xs[j];
      Mat2 dA = a.value(x, t);
      auto dG = a.gradient(x, t);
      for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
          dA(r, c) -= a0[j](r, c);
          dG[0](r, c) -= g0[j][0](r, c);
          dG[1](r, c) -= g0[j][1](r, c);
        }
      double worst = 0.0;
      double bx = 1.0 + dot(x, x);
      for (std::size_t k = 0; k < nxi; ++k) {
        std::size_t i = j * nxi + k;
        const Vec& xi = sample.xis[k];
        Vec v = dA.apply(xi);
        double corr = 2.0 * (v[0] * px0[i] + v[1] * px1[i]) - (dG[0].quad(xi) * pk0[i] + dG[1].quad(xi) * pk1[i]);
        worst = std::max(worst, std::abs(corr) / (budget_coeff * norm(xi) / bx));
      }
      return worst;
    }, per_x);
    return *std::max_element(per_x.begin(), per_x.end());
  };
  double T1;
  if (worst_ratio(t_max) <= 1.0) {
    T1 = t_max;
  } else {
    double lo = 0.0, hi = t_max;
    for (int it = 0; it < bisection_steps; ++it) {
      double mid = 0.5 * (lo + hi);
      if (worst_ratio(mid) <= 1.0) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    T1 = lo;
  }
  EstimateReport rep;
  rep.name = "time_stability_horizon";
  rep.values["T1"] = T1;
  rep.values["t_max"] = t_max;
  rep.values["budget_coeff"] = budget_coeff;
  rep.pass = T1 > 0.0;
  return rep;
}

EstimateReport metric_flatness(const MetricField& a1, const std::vector<Vec>& xs, bool subtract_identity) {
  if (xs.empty()) throw ConfigError("metric_flatness: empty sample");
  double xmax = 0.0;
  for (const auto& x : xs) xmax = std::max(xmax, norm(x));
  double sup = 0.0, inner = 0.0, outer = 0.0;
  for (const auto& x : xs) {
    Mat2 A = a1.value(x, 0.0);
    if (subtract_identity) A = [&] {
      Mat2 B = A;
      B(0, 0) -= 1.0;
      if (a1.dim == 2) B(1, 1) -= 1.0;
      return B;
    }();
    auto G = a1.gradient(x, 0.0);
    double mag = 0.0;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c)
        mag = std::max({mag, std::abs(A(r, c)) + std::abs(G[0](r, c)) + std::abs(G[1](r, c))});
    double q = mag * (1.0 + dot(x, x));
    sup = std::max(sup, q);
    double r = norm(x);
    if (r <= 0.5 * xmax) inner = std::max(inner, q);
    if (r >= 0.75 * xmax) outer = std::max(outer, q);
  }
  EstimateReport rep;
  rep.name = "metric_flatness";
  rep.values["C"] = sup;
  rep.values["inner_max"] = inner;
  rep.values["outer_max"] = outer;
  double ratio = inner > 0.0 ? outer / inner : (outer > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  rep.values["decay_ratio"] = ratio;
  rep.pass = std::isfinite(sup) && ratio <= 1.5;
  return rep;
}

EstimateReport perturbation_margin(const MetricField& a0, const MetricField& a1,
                                   const EscapeSymbol& p_mu, const SymbolSample& sample,
                                   double budget_coeff, double eta_cap) {
  (void)a0;  // the correction is linear in eta and only involves A1
  auto flat = metric_flatness(a1, sample.xs, false);
  if (!flat.pass)
    throw ConfigError("perturbation_margin: A1 fails the <x>^-2 flatness precondition (decay ratio " +
                      std::to_string(flat.value("decay_ratio")) + ")");
  if (!(budget_coeff > 0.0)) throw ConfigError("perturbation_margin: budget must be positive");
  std::size_t nx = sample.xs.size(), nxi = sample.xis.size();
  std::vector<double> per_x(nx);
  // Correction per unit eta, relative to the budget.
  kernels::sweep(default_backend(), [&](std::size_t j) {
    const Vec& x = sample.xs[j];
    Mat2 A = a1.value(x, 0.0);
    auto G = a1.gradient(x, 0.0);
    double bx = 1.0 + dot(x, x);
    double worst = 0.0;
    for (std::size_t k = 0; k < nxi; ++k) {
      const Vec& xi = sample.xis[k];
      CVec gx = p_mu.symbol.grad_x(x, xi), gk = p_mu.symbol.grad_xi(x, xi);
      Vec v = A.apply(xi);
      double corr = 2.0 * (v[0] * gx[0].real() + v[1] * gx[1].real()) -
                    (G[0].quad(xi) * gk[0].real() + G[1].quad(xi) * gk[1].real());
      worst = std::max(worst, std::abs(corr) / (budget_coeff * norm(xi) / bx));
    }
    return worst;
  }, per_x);
  double unit = *std::max_element(per_x.begin(), per_x.end());
  auto ok = [&](double eta) { return eta * unit <= 1.0; };
  double eta;
  if (ok(eta_cap)) {
    eta = eta_cap;
  } else {
    double lo = 0.0, hi = eta_cap;
    for (int it = 0; it < bisection_steps; ++it) {
      double mid = 0.5 * (lo + hi);
      if (ok(mid)) {
        lo = mid;
      } else {
        hi = mid;
      }
    }
    eta = lo;
  }
  EstimateReport rep;
  rep.name = "perturbation_margin";
  rep.values["eta_max"] = eta;
  rep.values["eta_cap"] = eta_cap;
  rep.values["unit_correction"] = unit;
  rep.values["A1_flatness_C"] = flat.value("C");
  rep.pass = eta > 0.0;
  return rep;
}

Symbol assemble_gamma(const Symbol& p_mu0, const std::vector<std::pair<double, Symbol>>& terms) {
  std::vector<std::pair<double, Symbol>> kept;
  for (const auto& t : terms)
    if (t.first > 1e-12) kept.push_back(t);
  bool analytic = p_mu0.has_analytic_gradients();
  for (const auto& t : kept) analytic = analytic && t.second.has_analytic_gradients();
  Symbol g(p_mu0.dim(), 0.0,
           [p_mu0, kept](const Vec& x, const Vec& xi, double t) {
             cplx acc = p_mu0(x, xi, t);
             for (const auto& [b, s] : kept) acc += b * s(x, xi, t);
             return acc;
           },
           "gamma");
  if (analytic) {
    g = g.with_gradients(
        [p_mu0, kept](const Vec& x, const Vec& xi, double t) {
          CVec acc = p_mu0.grad_x(x, xi, t);
          for (const auto& [b, s] : kept) {
            CVec d = s.grad_x(x, xi, t);
            acc[0] += b * d[0];
            acc[1] += b * d[1];
          }
          return acc;
        },
        [p_mu0, kept](const Vec& x, const Vec& xi, double t) {
          CVec acc = p_mu0.grad_xi(x, xi, t);
          for (const auto& [b, s] : kept) {
            CVec d = s.grad_xi(x, xi, t);
            acc[0] += b * d[0];
            acc[1] += b * d[1];
          }
          return acc;
        });
  }
  return g;
}

}  // namespace qls
