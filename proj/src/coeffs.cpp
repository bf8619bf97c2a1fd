#include "qls/coeffs.hpp"

#include <algorithm>
#include <limits>
#include <random>

#include "qls/kernels.hpp"

namespace qls {

double z_norm(const ZVec& z, int dim) {
  double s = std::norm(z[0]) + std::norm(z[1]) + std::norm(z[2]) + std::norm(z[4]);
  if (dim == 2) s += std::norm(z[3]) + std::norm(z[5]);
  return std::sqrt(s);
}

namespace {

double param(const json& p, const char* key, double def) {
  if (!p.contains(key)) return def;
  if (!p.at(key).is_number()) throw ConfigError(std::string("coefficient parameter ") + key + " must be a number");
  return p.at(key).get<double>();
}

cplx cparam(const json& p, const char* key, cplx def) {
  if (!p.contains(key)) return def;
  const auto& v = p.at(key);
  if (v.is_number()) return {v.get<double>(), 0.0};
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number())
    return {v[0].get<double>(), v[1].get<double>()};
  throw ConfigError(std::string("coefficient parameter ") + key + " must be a number or [re, im]");
}

void check_known(const json& p, std::initializer_list<const char*> keys) {
  if (!p.is_object()) throw ConfigError("coefficient parameters must be an object");
  for (auto it = p.begin(); it != p.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("unknown coefficient parameter: " + it.key());
  }
}

CVec ones(int dim, cplx v) { return {v, dim == 2 ? v : cplx(0.0)}; }

CoefficientSet base_set(int dim, const std::string& name, const json& params) {
  if (dim != 1 && dim != 2) throw ConfigError("coefficient dim must be 1 or 2");
  CoefficientSet cs;
  cs.dim = dim;
  cs.name = name;
  cs.params = params;
  cs.meta.M = param(params, "M", 10.0);
  cs.a = [dim](const Vec&, double, const ZVec&) { return Mat2::scalar(1.0, dim); };
  cs.b1 = [](const Vec&, double, const ZVec&) { return CVec{0.0, 0.0}; };
  cs.b2 = cs.b1;
  cs.c1 = [](const Vec&, double, cplx, cplx) { return cplx(0.0); };
  cs.c2 = cs.c1;
  double famp = param(params, "f_amp", 0.0);
  cs.f = [famp](const Vec& x, double) { return cplx(famp * std::exp(-dot(x, x))); };
  cs.metric0 = flat_metric(dim);
  cs.translation_invariant = famp == 0.0;
  return cs;
}

}  // namespace

std::vector<std::string> registry_names() {
  return {"flat", "bump-metric", "time-modulated-bump", "quadratic-b1", "cubic-semilinear", "trap-metric"};
}

CoefficientSet make_coefficients(const std::string& name, int dim, const json& params) {
  if (name == "flat") {
    check_known(params, {"M", "f_amp"});
    return base_set(dim, name, params);
  }
  if (name == "bump-metric" || name == "time-modulated-bump") {
    bool timed = name == "time-modulated-bump";
    if (timed) {
      check_known(params, {"M", "f_amp", "amplitude", "radius", "rho"});
    } else {
      check_known(params, {"M", "f_amp", "amplitude", "radius", "profile", "width", "q"});
    }
    auto cs = base_set(dim, name, params);
    double A = param(params, "amplitude", 0.1);
    double rad = param(params, "radius", 4.0);
    double width = param(params, "width", 1.0);
    double q = timed ? 0.0 : param(params, "q", 0.0);
    double rho = timed ? param(params, "rho", 0.05) : 0.0;
    std::string profile = params.value("profile", std::string("compact"));
    if (!(rad > 0.0) || !(width > 0.0)) throw ConfigError("bump radius and width must be positive");
    bool gauss = profile == "gaussian";
    if (!gauss && profile != "compact") throw ConfigError("bump profile must be compact or gaussian");
    std::function<double(const Vec&)> beta;
    if (gauss) {
      beta = [width](const Vec& x) { return std::exp(-dot(x, x) / (width * width)); };
    } else {
      beta = [rad](const Vec& x) { return compact_bump(norm(x) / rad); };
    }
    cs.a = [=](const Vec& x, double t, const ZVec& z) {
      double g = 1.0 + beta(x) * (A + q * std::real(z[z_u] * z[z_ubar]) + t * rho);
      return Mat2::scalar(g, dim);
    };
    cs.metric0 = gauss ? gaussian_bump_metric(dim, A, width) : compact_bump_metric(dim, A, rad);
    cs.a_depends_on_z = q != 0.0;
    cs.translation_invariant = false;
    double lo = 1.0 + std::min(0.0, A) - std::abs(q) * cs.meta.M * cs.meta.M;
    if (lo <= 0.0) throw ConfigError("bump parameters destroy ellipticity on the ball B_M");
    return cs;
  }
  if (name == "quadratic-b1") {
    check_known(params, {"M", "f_amp", "kappa1", "kappa2", "amplitude", "radius"});
    auto cs = base_set(dim, name, params);
    cplx k1 = cparam(params, "kappa1", cplx(0.0, 0.2));
    cplx k2 = cparam(params, "kappa2", cplx(0.1, 0.0));
    double A = param(params, "amplitude", 0.0);
    double rad = param(params, "radius", 4.0);
    if (A != 0.0) {
      cs.a = [=](const Vec& x, double, const ZVec&) {
        return Mat2::scalar(1.0 + A * compact_bump(norm(x) / rad), dim);
      };
      cs.metric0 = compact_bump_metric(dim, A, rad);
      cs.translation_invariant = false;
    }
    cs.b1 = [=](const Vec&, double, const ZVec& z) { return ones(dim, k1 * z[z_u] * z[z_ubar]); };
    cs.b2 = [=](const Vec&, double, const ZVec& z) { return ones(dim, k2 * z[z_u] * z[z_u]); };
    return cs;
  }
  if (name == "cubic-semilinear") {
    check_known(params, {"M", "f_amp", "kappa"});
    auto cs = base_set(dim, name, params);
    double k = param(params, "kappa", 1.0);
    cs.c1 = [k](const Vec&, double, cplx u, cplx ub) { return cplx(0.0, k) * u * ub; };
    return cs;
  }
  if (name == "trap-metric") {
    check_known(params, {"M", "f_amp", "depth", "r0", "power"});
    auto cs = base_set(dim, name, params);
    double depth = param(params, "depth", 0.8);
    double r0 = param(params, "r0", 4.0);
    int power = static_cast<int>(param(params, "power", 8.0));
    if (!(depth < 1.0) || !(r0 > 0.0) || power < 2) throw ConfigError("invalid trap-metric parameters");
    auto m = circular_trap_metric(dim, depth, r0, power);
    cs.a = [m](const Vec& x, double, const ZVec&) { return m.value(x, 0.0); };
    cs.metric0 = m;
    cs.translation_invariant = false;
    return cs;
  }
  throw ConfigError("unknown coefficient family: " + name);
}

// ---------------------------------------------------------------------------

FrozenLinearCoefficients::FrozenLinearCoefficients(const Grid& g)
    : grid(g),
      a{StateField(g), StateField(g), StateField(g)},
      b1{StateField(g), StateField(g)},
      b2{StateField(g), StateField(g)},
      c1(g),
      c2(g),
      f(g),
      dt_a{StateField(g), StateField(g), StateField(g)},
      dt_b1{StateField(g), StateField(g)},
      dt_b2{StateField(g), StateField(g)} {}

Mat2 FrozenLinearCoefficients::a_at(std::size_t i) const {
  Mat2 m;
  m(0, 0) = a[0][i].real();
  if (grid.dim() == 2) {
    m(0, 1) = m(1, 0) = a[1][i].real();
    m(1, 1) = a[2][i].real();
  }
  return m;
}

MetricField FrozenLinearCoefficients::metric() const {
  std::vector<double> a00(grid.size()), a01(grid.size()), a11(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    a00[i] = a[0][i].real();
    a01[i] = a[1][i].real();
    a11[i] = a[2][i].real();
  }
  return sampled_metric(grid, std::move(a00), std::move(a01), std::move(a11), "frozen");
}

std::vector<ZVec> state_z(const StateField& u) {
  const Grid& g = u.grid();
  std::array<StateField, 2> du{partial(u, 0), g.dim() == 2 ? partial(u, 1) : StateField(g)};
  std::vector<ZVec> z(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    z[i] = {u[i], std::conj(u[i]), du[0][i], du[1][i], std::conj(du[0][i]), std::conj(du[1][i])};
  }
  return z;
}

StateField equation_rhs(const CoefficientSet& cs, const StateField& u, double t) {
  const Grid& g = u.grid();
  if (g.dim() != cs.dim) throw ConfigError("coefficient and grid dimensions differ");
  auto z = state_z(u);
  StateField ub = u.conj();
  std::array<StateField, 2> dub{partial(ub, 0), g.dim() == 2 ? partial(ub, 1) : StateField(g)};
  StateField uxx = second_partial(u, 0, 0);
  StateField uxy = g.dim() == 2 ? second_partial(u, 0, 1) : StateField(g);
  StateField uyy = g.dim() == 2 ? second_partial(u, 1, 1) : StateField(g);
  StateField out(g, t);
  const cplx I(0.0, 1.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec x = g.point(i);
    Mat2 A = cs.a(x, t, z[i]);
    CVec b1 = cs.b1(x, t, z[i]), b2 = cs.b2(x, t, z[i]);
    cplx lead = A(0, 0) * uxx[i];
    if (g.dim() == 2) lead += 2.0 * A(0, 1) * uxy[i] + A(1, 1) * uyy[i];
    cplx first = b1[0] * z[i][z_du] + b2[0] * dub[0][i];
    if (g.dim() == 2) first += b1[1] * z[i][z_du + 1] + b2[1] * dub[1][i];
    out[i] = I * lead + first + cs.c1(x, t, u[i], ub[i]) * u[i] + cs.c2(x, t, u[i], ub[i]) * ub[i] +
             cs.f(x, t);
  }
  return out;
}

FrozenLinearCoefficients freeze_at_state(const CoefficientSet& cs, const StateField& u, double t) {
  const Grid& g = u.grid();
  if (g.dim() != cs.dim) throw ConfigError("coefficient and grid dimensions differ");
  u.require_finite("freeze_at_state");
  auto z = state_z(u);
  double zmax = 0.0;
  for (const auto& zi : z) zmax = std::max(zmax, z_norm(zi, g.dim()));
  if (zmax >= cs.meta.M)
    throw ComputationError("ball excursion: max |z| = " + std::to_string(zmax) + " exceeds M = " +
                           std::to_string(cs.meta.M));
  FrozenLinearCoefficients fz(g);
  fz.t = t;
  fz.max_z = zmax;
  // z velocity from the equation itself.
  StateField ut = equation_rhs(cs, u, t);
  auto zdot = state_z(ut);
  double zd = 0.0;
  for (const auto& v : zdot) zd = std::max(zd, z_norm(v, g.dim()));
  double delta = 1e-4 / std::max(1.0, zd);
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec x = g.point(i);
    Mat2 A = cs.a(x, t, z[i]);
    fz.a[0][i] = A(0, 0);
    fz.a[1][i] = A(0, 1);
    fz.a[2][i] = A(1, 1);
    CVec b1 = cs.b1(x, t, z[i]), b2 = cs.b2(x, t, z[i]);
    for (int j = 0; j < 2; ++j) {
      fz.b1[j][i] = b1[j];
      fz.b2[j][i] = b2[j];
    }
    fz.c1[i] = cs.c1(x, t, u[i], std::conj(u[i]));
    fz.c2[i] = cs.c2(x, t, u[i], std::conj(u[i]));
    fz.f[i] = cs.f(x, t);
    ZVec zp = z[i], zm = z[i];
    for (int k = 0; k < 6; ++k) {
      zp[k] += delta * zdot[i][k];
      zm[k] -= delta * zdot[i][k];
    }
    Mat2 Ap = cs.a(x, t + delta, zp), Am = cs.a(x, t - delta, zm);
    fz.dt_a[0][i] = (Ap(0, 0) - Am(0, 0)) / (2.0 * delta);
    fz.dt_a[1][i] = (Ap(0, 1) - Am(0, 1)) / (2.0 * delta);
    fz.dt_a[2][i] = (Ap(1, 1) - Am(1, 1)) / (2.0 * delta);
    CVec b1p = cs.b1(x, t + delta, zp), b1m = cs.b1(x, t - delta, zm);
    CVec b2p = cs.b2(x, t + delta, zp), b2m = cs.b2(x, t - delta, zm);
    for (int j = 0; j < 2; ++j) {
      fz.dt_b1[j][i] = (b1p[j] - b1m[j]) / (2.0 * delta);
      fz.dt_b2[j][i] = (b2p[j] - b2m[j]) / (2.0 * delta);
    }
  }
  for (auto* fld : {&fz.c1, &fz.c2, &fz.f}) fld->set_time(t);
  return fz;
}

std::vector<ZVec> default_z_sample(int dim, double M, unsigned seed, int count) {
  std::vector<ZVec> out;
  out.push_back(ZVec{});
  std::vector<int> slots{0, 1, 2, 4};
  if (dim == 2) slots = {0, 1, 2, 3, 4, 5};
  for (int s : slots) {
    ZVec z{};
    z[s] = 0.5 * M;
    out.push_back(z);
    z[s] = cplx(0.0, 0.5 * M);
    out.push_back(z);
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (int c = 0; c < count; ++c) {
    ZVec z{};
    for (int s : slots) z[s] = cplx(ud(rng), ud(rng));
    double n = z_norm(z, dim);
    double target = 0.9 * M * std::abs(ud(rng));
    if (n > 0.0)
      for (auto& v : z) v *= target / n;
    out.push_back(z);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<Vec> validator_points(const Grid& g, int per_axis = 64) {
  int n = g.points_per_axis();
  int stride = std::max(1, n / per_axis);
  std::vector<Vec> xs;
  for (int i = 0; i < n; i += stride) {
    if (g.dim() == 1) {
      xs.push_back(g.point(g.flat(i)));
    } else {
      for (int j = 0; j < n; j += stride) xs.push_back(g.point(g.flat(i, j)));
    }
  }
  return xs;
}

double mat_abs(const Mat2& m) {
  return std::max({std::abs(m(0, 0)), std::abs(m(0, 1)), std::abs(m(1, 0)), std::abs(m(1, 1))});
}

Mat2 sub(const Mat2& a, const Mat2& b, double scale = 1.0) {
  Mat2 r;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) r(i, j) = (a(i, j) - b(i, j)) * scale;
  return r;
}

struct FlatnessFit {
  double C = 0.0;
  double inner = 0.0;
  double outer = 0.0;
  double ratio = 0.0;
  bool decays = true;
};

// Given q(x) >= 0 meant to be <= C <x>^-2: fit C = sup q <x>^2 and compare
// outer (|x| >= 3/4 max) and inner (|x| <= 1/2 max) maxima of q <x>^2.
FlatnessFit fit_flatness(const std::vector<Vec>& xs, const std::vector<double>& q) {
  FlatnessFit f;
  double xmax = 0.0;
  for (const auto& x : xs) xmax = std::max(xmax, norm(x));
  for (std::size_t i = 0; i < xs.size(); ++i) {
    double v = q[i] * (1.0 + dot(xs[i], xs[i]));
    f.C = std::max(f.C, v);
    double r = norm(xs[i]);
    if (r <= 0.5 * xmax) f.inner = std::max(f.inner, v);
    if (r >= 0.75 * xmax) f.outer = std::max(f.outer, v);
  }
  f.ratio = f.inner > 0.0 ? f.outer / f.inner : (f.outer > 1e-12 ? std::numeric_limits<double>::infinity() : 0.0);
  f.decays = f.ratio <= 1.5 && std::isfinite(f.C);
  return f;
}

// Ellipticity gamma = min(lambda_min, 1 / lambda_max).
double ellipticity(const Mat2& A, int dim) {
  auto e = A.eig_range(dim);
  if (e[0] <= 0.0) return 0.0;
  return std::min(e[0], 1.0 / e[1]);
}

EstimateReport ray_report(const std::string& name, const MetricField& m, const Grid& g,
                          const ValidationOptions& opt) {
  EstimateReport r;
  r.name = name;
  if (!opt.run_rays) {
    r.pass = true;
    r.notes["skipped"] = "ray classification disabled";
    return r;
  }
  double L = g.half_length();
  auto sample = default_ray_sample(g.dim(), 0.25 * L, opt.positions, opt.directions);
  auto v = classify_nontrapping(m, sample, 0.5 * L, opt.s_budget, opt.ray_ds);
  r.pass = v.nontrapping_on_sample;
  r.values["rays"] = static_cast<double>(v.rays.size());
  r.values["undetermined"] = static_cast<double>(v.undetermined);
  r.values["failed"] = static_cast<double>(v.failed);
  r.values["worst_ray"] = static_cast<double>(v.worst_ray);
  double drift = 0.0;
  for (const auto& ray : v.rays) drift = std::max(drift, ray.h_drift);
  r.values["max_h_drift"] = drift;
  return r;
}

// Finite-difference x-derivatives of a matrix field at x (orders 1 and 2).
double matrix_derivative_size(const std::function<Mat2(const Vec&)>& A, const Vec& x, int dim, double h) {
  double m = 0.0;
  Mat2 a0 = A(x);
  for (int j = 0; j < dim; ++j) {
    Vec p = x, q = x;
    p[j] += h;
    q[j] -= h;
    Mat2 ap = A(p), aq = A(q);
    m = std::max(m, mat_abs(sub(ap, aq, 0.5 / h)));
    Mat2 second;
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 2; ++c) second(r, c) = (ap(r, c) - 2.0 * a0(r, c) + aq(r, c)) / (h * h);
    m = std::max(m, mat_abs(second));
  }
  return m;
}

}  // namespace

EstimateReport validate_assumptions(const CoefficientSet& cs, const Grid& grid, const std::vector<ZVec>& zs,
                                    const StateField* u0, const ValidationOptions& opt) {
  if (grid.dim() != cs.dim) throw ConfigError("coefficient and grid dimensions differ");
  int dim = cs.dim;
  auto xs = validator_points(grid);
  std::vector<double> ts{0.0, 0.5, 1.0};
  std::vector<ZVec> ball;
  for (const auto& z : zs)
    if (z_norm(z, dim) < cs.meta.M) ball.push_back(z);
  if (ball.empty()) ball.push_back(ZVec{});
  const double h = 1e-3;

  EstimateReport rep;
  rep.name = "assumptions";
  EstimateReport nl1{"NL1"}, nl2{"NL2"}, nl3{"NL3"}, nl4{"NL4"}, nl5{"NL5"}, nl6{"NL6"};

  // Per-x sweeps, reduced afterwards.
  std::size_t nx = xs.size();
  std::vector<double> sup_coef(nx), asym(nx), gam(nx), flat_q(nx);
  std::vector<double> finite(nx);
  kernels::sweep(default_backend(), [&](std::size_t i) {
    const Vec& x = xs[i];
    double sc = 0.0, as = 0.0, ga = std::numeric_limits<double>::infinity(), fq = 0.0;
    bool fin = true;
    for (double t : ts) {
      for (const auto& z : ball) {
        Mat2 A = cs.a(x, t, z);
        CVec b1 = cs.b1(x, t, z), b2 = cs.b2(x, t, z);
        cplx c1 = cs.c1(x, t, z[0], z[1]), c2 = cs.c2(x, t, z[0], z[1]);
        double m = std::max({mat_abs(A), std::abs(b1[0]), std::abs(b1[1]), std::abs(b2[0]),
                             std::abs(b2[1]), std::abs(c1), std::abs(c2)});
        auto Ax = [&](const Vec& y) { return cs.a(y, t, z); };
        double dA = matrix_derivative_size(Ax, x, dim, h);
        fin = fin && std::isfinite(m) && std::isfinite(dA);
        sc = std::max(sc, m);
        as = std::max(as, std::abs(A(0, 1) - A(1, 0)));
        ga = std::min(ga, ellipticity(A, dim));
        Mat2 Id = Mat2::scalar(1.0, dim);
        double q = mat_abs(sub(Id, A)) + dA;
        Mat2 Atp = cs.a(x, t + h, z), Atm = cs.a(x, t - h, z);
        q += mat_abs(sub(Atp, Atm, 0.5 / h));
        auto Axp = [&](const Vec& y) { return cs.a(y, t + h, z); };
        auto Axm = [&](const Vec& y) { return cs.a(y, t - h, z); };
        for (int j = 0; j < dim; ++j) {
          Vec p = x, m2 = x;
          p[j] += h;
          m2[j] -= h;
          Mat2 mixed;
          for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c)
              mixed(r, c) = (Axp(p)(r, c) - Axp(m2)(r, c) - Axm(p)(r, c) + Axm(m2)(r, c)) / (4.0 * h * h);
          q += mat_abs(mixed);
        }
        fq = std::max(fq, q);
      }
    }
    sup_coef[i] = sc;
    asym[i] = as;
    gam[i] = ga;
    flat_q[i] = fq;
    return fin ? 1.0 : 0.0;
  }, std::span<double>(finite));

  bool all_finite = true;
  double sup = 0.0, max_asym = 0.0, gamma = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < nx; ++i) {
    all_finite = all_finite && finite[i] > 0.0 && std::isfinite(sup_coef[i]) && std::isfinite(flat_q[i]);
    sup = std::max(sup, sup_coef[i]);
    max_asym = std::max(max_asym, asym[i]);
    gamma = std::min(gamma, gam[i]);
  }
  nl1.values["sup_coefficients"] = sup;
  nl1.pass = all_finite;
  nl2.pass = all_finite;
  nl2.notes["detail"] = "metric entries are real by type";
  nl3.values["max_asymmetry"] = max_asym;
  nl3.pass = max_asym <= 1e-14;
  nl4.values["gamma_M"] = gamma;
  nl4.pass = gamma > 0.0 && (cs.meta.gamma_M == 0.0 || gamma >= cs.meta.gamma_M);
  auto ff = fit_flatness(xs, flat_q);
  nl5.values["C_M"] = ff.C;
  nl5.values["decay_ratio"] = ff.ratio;
  nl5.pass = ff.decays && (cs.meta.C_M == 0.0 || ff.C <= cs.meta.C_M);
  if (!ff.decays) nl5.notes["failure"] = "I - A and derivatives do not decay like <x>^-2";

  // NL6: b_j(x,t,0) = 0, d_z b_j(x,t,0) = 0.
  double b_zero = 0.0, b_grad = 0.0;
  const double hz = 1e-4;
  std::vector<int> slots = dim == 2 ? std::vector<int>{0, 1, 2, 3, 4, 5} : std::vector<int>{0, 1, 2, 4};
  for (const auto& x : xs) {
    for (double t : ts) {
      ZVec z0{};
      for (const auto* rule : {&cs.b1, &cs.b2}) {
        CVec v = (*rule)(x, t, z0);
        b_zero = std::max({b_zero, std::abs(v[0]), std::abs(v[1])});
        for (int s : slots) {
          for (cplx dir : {cplx(1.0, 0.0), cplx(0.0, 1.0)}) {
            ZVec zp{}, zm{};
            zp[s] = hz * dir;
            zm[s] = -hz * dir;
            CVec p = (*rule)(x, t, zp), m = (*rule)(x, t, zm);
            for (int j = 0; j < 2; ++j) b_grad = std::max(b_grad, std::abs(p[j] - m[j]) / (2.0 * hz));
          }
        }
      }
    }
  }
  nl6.values["max_b_at_zero"] = b_zero;
  nl6.values["max_dz_b_at_zero"] = b_grad;
  nl6.pass = b_zero <= 1e-12 && b_grad <= 1e-8;
  if (b_zero > 1e-12) nl6.notes["failure"] = "b_j(x,t,0) != 0";
  else if (b_grad > 1e-8) nl6.notes["failure"] = "d_z b_j(x,t,0) != 0";
  {
    // d_x a at z = 0, t = 0 decomposed over cubes.
    CubePartition part(grid, 1.0);
    double total = 0.0;
    for (int j = 0; j < dim; ++j) {
      StateField da(grid);
      for (std::size_t i = 0; i < grid.size(); ++i) {
        Vec x = grid.point(i), p = x, m = x;
        p[j] += h;
        m[j] -= h;
        da[i] = (cs.a(p, 0.0, ZVec{})(0, 0) - cs.a(m, 0.0, ZVec{})(0, 0)) / (2.0 * h);
      }
      total += cube_decompose(da, part).alpha_sum();
    }
    nl6.values["sum_alpha_dx_a"] = total;
  }

  // NL7 on the metric frozen at the initial state.
  MetricField m0 = flat_metric(dim);
  if (u0 != nullptr && cs.a_depends_on_z) {
    m0 = freeze_at_state(cs, *u0, 0.0).metric();
  } else if (cs.metric0) {
    m0 = *cs.metric0;
  } else {
    m0 = freeze_at_state(cs, StateField(grid), 0.0).metric();
  }
  auto nl7 = ray_report("NL7", m0, grid, opt);

  rep.children = {nl1, nl2, nl3, nl4, nl5, nl6, nl7};
  rep.pass = std::all_of(rep.children.begin(), rep.children.end(), [](const EstimateReport& r) { return r.pass; });
  return rep;
}

EstimateReport validate_linear(const FrozenLinearCoefficients& fz, const ValidationOptions& opt) {
  const Grid& g = fz.grid;
  int dim = g.dim();
  EstimateReport rep;
  rep.name = "linear_assumptions";
  EstimateReport l1{"L1"}, l2{"L2"}, l3{"L3"}, l4{"L4"};

  auto cn = [&](const StateField& s) {
    std::vector<std::size_t> all(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) all[i] = i;
    return fd_cn_norm(s, all, 2);
  };
  double c_a = 0.0, c_b2 = 0.0, c_dta = 0.0, c_dtb2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    c_a = std::max(c_a, cn(fz.a[k]));
    c_dta = std::max(c_dta, cn(fz.dt_a[k]));
  }
  for (int j = 0; j < 2; ++j) {
    c_b2 = std::max(c_b2, cn(fz.b2[j]));
    c_dtb2 = std::max(c_dtb2, cn(fz.dt_b2[j]));
  }
  bool fin = std::isfinite(c_a) && std::isfinite(c_b2) && std::isfinite(c_dta) && std::isfinite(c_dtb2);
  for (const auto* s : {&fz.b1[0], &fz.b1[1], &fz.c1, &fz.c2, &fz.f}) fin = fin && s->is_finite();
  l1.values["C_a"] = c_a;
  l1.values["C_b2"] = c_b2;
  l1.values["C_dt_a"] = c_dta;
  l1.values["C_dt_b2"] = c_dtb2;
  l1.pass = fin;

  double gamma = std::numeric_limits<double>::infinity(), asym = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) gamma = std::min(gamma, ellipticity(fz.a_at(i), dim));
  l2.values["gamma"] = gamma;
  l2.values["max_asymmetry"] = asym;
  l2.pass = gamma > 0.0;

  // |I - A| + |grad A| + |A_t| + |grad A_t| against <x>^-2.
  std::array<StateField, 3> am{fz.a[0], fz.a[1], fz.a[2]};
  for (std::size_t i = 0; i < g.size(); ++i) {
    am[0][i] -= 1.0;
    if (dim == 2) am[2][i] -= 1.0;
  }
  std::vector<double> q(g.size(), 0.0);
  for (int k = 0; k < (dim == 2 ? 3 : 1); ++k) {
    std::array<StateField, 2> ga{partial(am[k], 0), dim == 2 ? partial(am[k], 1) : StateField(g)};
    std::array<StateField, 2> gt{partial(fz.dt_a[k], 0), dim == 2 ? partial(fz.dt_a[k], 1) : StateField(g)};
    for (std::size_t i = 0; i < g.size(); ++i) {
      double v = std::abs(am[k][i]) + std::abs(ga[0][i]) + std::abs(ga[1][i]) + std::abs(fz.dt_a[k][i]) +
                 std::abs(gt[0][i]) + std::abs(gt[1][i]);
      q[i] = std::max(q[i], v);
    }
  }
  std::vector<Vec> xs(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) xs[i] = g.point(i);
  auto ff = fit_flatness(xs, q);
  l3.values["C"] = ff.C;
  l3.values["decay_ratio"] = ff.ratio;
  l3.pass = ff.decays;

  CubePartition part(g, 1.0);
  StateField imb(g), dtreb(g);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0.0, d = 0.0;
    for (int j = 0; j < dim; ++j) {
      s += std::norm(fz.b1[j][i].imag());
      d += std::norm(fz.dt_b1[j][i].imag());
    }
    imb[i] = std::sqrt(s);
    dtreb[i] = std::sqrt(d);
  }
  double b0 = 0.0, bt = 0.0;
  for (double v : cube_sup_weights(imb, part)) b0 += v;
  for (double v : cube_sup_weights(dtreb, part)) bt += v;
  l4.values["sum_beta0"] = b0;
  l4.values["sum_beta_tilde"] = bt;
  l4.pass = std::isfinite(l4.values["sum_beta0"]) && std::isfinite(l4.values["sum_beta_tilde"]);

  auto l5 = ray_report("L5", fz.metric(), g, opt);
  rep.children = {l1, l2, l3, l4, l5};
  rep.pass = std::all_of(rep.children.begin(), rep.children.end(), [](const EstimateReport& r) { return r.pass; });
  return rep;
}

EstimateReport validate_metric(const MetricField& a, const Grid& g, const ValidationOptions& opt) {
  int dim = a.dim;
  auto xs = validator_points(g);
  EstimateReport rep;
  rep.name = "metric_assumptions";
  EstimateReport d1{"D1"}, d2{"D2"}, d3{"D3"}, d4{"D4"};
  double sup = 0.0, asym = 0.0, gamma = std::numeric_limits<double>::infinity();
  std::vector<double> q(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    Mat2 A = a.value(xs[i], 0.0);
    auto G = a.gradient(xs[i], 0.0);
    double d2A = matrix_derivative_size([&](const Vec& y) { return a.value(y, 0.0); }, xs[i], dim, 1e-3);
    sup = std::max({sup, mat_abs(A), mat_abs(G[0]), mat_abs(G[1]), d2A});
    asym = std::max(asym, std::abs(A(0, 1) - A(1, 0)));
    gamma = std::min(gamma, ellipticity(A, dim));
    q[i] = mat_abs(sub(Mat2::scalar(1.0, dim), A)) + mat_abs(G[0]) + mat_abs(G[1]);
  }
  d1.values["sup"] = sup;
  d1.pass = std::isfinite(sup);
  d2.values["max_asymmetry"] = asym;
  d2.pass = asym <= 1e-14;
  d3.values["gamma"] = gamma;
  d3.pass = gamma > 0.0;
  auto ff = fit_flatness(xs, q);
  d4.values["C"] = ff.C;
  d4.values["decay_ratio"] = ff.ratio;
  d4.pass = ff.decays;
  auto d5 = ray_report("D5", a, g, opt);
  rep.children = {d1, d2, d3, d4, d5};
  rep.pass = std::all_of(rep.children.begin(), rep.children.end(), [](const EstimateReport& r) { return r.pass; });
  return rep;
}

// ---------------------------------------------------------------------------

std::vector<std::vector<double>> partition_of_unity(const CubePartition& part) {
  const Grid& g = part.grid();
  double L = g.half_length(), side = part.side();
  const auto& cubes = part.cubes();
  std::vector<double> total(g.size(), 0.0);
  std::vector<std::vector<double>> psi(cubes.size());
  for (std::size_t c = 0; c < cubes.size(); ++c) {
    psi[c].resize(cubes[c].double_points.size());
    for (std::size_t k = 0; k < cubes[c].double_points.size(); ++k) {
      std::size_t i = cubes[c].double_points[k];
      Vec x = g.point(i);
      double v = 1.0;
      for (int d = 0; d < g.dim(); ++d) v *= compact_bump(periodic_offset(x[d] - cubes[c].center[d], L) / side);
      psi[c][k] = v;
      total[i] += v;
    }
  }
  for (std::size_t c = 0; c < cubes.size(); ++c)
    for (std::size_t k = 0; k < psi[c].size(); ++k) psi[c][k] /= total[cubes[c].double_points[k]];
  return psi;
}

double fd_cn_norm(const StateField& g, const std::vector<std::size_t>& idx, int n) {
  const Grid& gr = g.grid();
  int N = gr.points_per_axis();
  int dim = gr.dim();
  double h = gr.spacing();
  std::vector<char> mask(gr.size(), 0);
  for (auto i : idx) mask[i] = 1;
  auto val = [&](int a, int b) -> cplx {
    a = ((a % N) + N) % N;
    b = ((b % N) + N) % N;
    std::size_t k = gr.flat(a, b);
    return mask[k] ? g[k] : cplx(0.0);
  };
  // Forward differences; evaluation points cover the support and n cells before it.
  std::vector<std::array<int, 2>> orders;
  for (int a = 0; a <= n; ++a) {
    if (dim == 1) {
      orders.push_back({a, 0});
    } else {
      for (int b = 0; a + b <= n; ++b) orders.push_back({a, b});
    }
  }
  auto binom = [](int m, int j) {
    double c = 1.0;
    for (int i = 0; i < j; ++i) c = c * (m - i) / (i + 1);
    return c;
  };
  std::vector<std::array<int, 2>> pts;
  {
    std::vector<char> seen(gr.size(), 0);
    for (auto i : idx) {
      auto p = gr.unflat(i);
      for (int da = -n; da <= 0; ++da)
        for (int db = (dim == 2 ? -n : 0); db <= 0; ++db) {
          int a = ((p[0] + da) % N + N) % N, b = dim == 2 ? ((p[1] + db) % N + N) % N : 0;
          std::size_t k = gr.flat(a, b);
          if (!seen[k]) {
            seen[k] = 1;
            pts.push_back({a, b});
          }
        }
    }
  }
  double best = 0.0;
  for (const auto& o : orders) {
    double scale = std::pow(h, -(o[0] + o[1]));
    for (const auto& p : pts) {
      cplx acc = 0.0;
      for (int j0 = 0; j0 <= o[0]; ++j0)
        for (int j1 = 0; j1 <= o[1]; ++j1) {
          double w = (((o[0] - j0) + (o[1] - j1)) & 1 ? -1.0 : 1.0) * binom(o[0], j0) * binom(o[1], j1);
          acc += w * val(p[0] + j0, p[1] + j1);
        }
      best = std::max(best, std::abs(acc) * scale);
    }
  }
  return best;
}

StateField CubeDecomposition::reconstruct() const {
  StateField out(grid);
  for (std::size_t c = 0; c < alpha.size(); ++c)
    for (std::size_t k = 0; k < support[c].size(); ++k) out[support[c][k]] += alpha[c] * phi[c][k];
  return out;
}

double CubeDecomposition::alpha_sum() const {
  double s = 0.0;
  for (double a : alpha) s += a;
  return s;
}

CubeDecomposition cube_decompose(const StateField& b, const CubePartition& part, int n_smooth) {
  require_same_grid(b.grid(), part.grid(), "cube_decompose");
  if (n_smooth < 0) throw ConfigError("cube_decompose: N_smooth must be nonnegative");
  b.require_finite("cube_decompose");
  const Grid& g = b.grid();
  auto eta = partition_of_unity(part);
  const auto& cubes = part.cubes();
  CubeDecomposition dec(g);
  dec.n_smooth = n_smooth;
  dec.alpha.resize(cubes.size());
  dec.support.resize(cubes.size());
  dec.phi.resize(cubes.size());
  std::vector<double> alpha(cubes.size());
  kernels::sweep(default_backend(), [&](std::size_t c) {
    const auto& pts = cubes[c].double_points;
    StateField local(g);
    for (std::size_t k = 0; k < pts.size(); ++k) local[pts[k]] = eta[c][k] * b[pts[k]];
    return fd_cn_norm(local, pts, n_smooth);
  }, alpha);
  for (std::size_t c = 0; c < cubes.size(); ++c) {
    const auto& pts = cubes[c].double_points;
    dec.alpha[c] = alpha[c];
    dec.support[c] = pts;
    dec.phi[c].resize(pts.size());
    for (std::size_t k = 0; k < pts.size(); ++k)
      dec.phi[c][k] = alpha[c] > 0.0 ? eta[c][k] * b[pts[k]] / alpha[c] : cplx(0.0);
  }
  return dec;
}

std::vector<double> cube_sup_weights(const StateField& f, const CubePartition& part) {
  require_same_grid(f.grid(), part.grid(), "cube_sup_weights");
  double c = 1.0 + 0.25 * f.grid().dim() * part.side() * part.side();
  std::vector<double> out;
  for (const auto& q : part.cubes()) {
    double m = 0.0;
    for (auto i : q.points) m = std::max(m, std::abs(f[i]));
    out.push_back(c * m);
  }
  return out;
}

double w1m_norm(const StateField& g, int M) {
  if (M < 0) throw ConfigError("w1m_norm: M must be nonnegative");
  const Grid& gr = g.grid();
  Spectrum c = forward_transform(g);
  double total = 0.0;
  double w = gr.cell_volume();
  for (int a = 0; a <= M; ++a) {
    for (int b = 0; b <= (gr.dim() == 2 ? M - a : 0); ++b) {
      Spectrum d = c;
      for (std::size_t i = 0; i < gr.size(); ++i) {
        auto p = gr.unflat(i);
        Vec k = gr.frequency(i);
        if ((a & 1 && gr.is_nyquist(p[0])) || (b & 1 && gr.is_nyquist(p[1]))) {
          d[i] = 0.0;
          continue;
        }
        d[i] *= std::pow(cplx(0.0, k[0]), a) * std::pow(cplx(0.0, k[1]), b);
      }
      StateField f = inverse_transform(d);
      double s = 0.0;
      for (const auto& v : f.values()) s += std::abs(v);
      total += s * w;
    }
  }
  return total;
}

bool rule_vanishes_to_second_order(const ZRule& rule, int dim, double tol) {
  std::vector<Vec> xs{{0.0, 0.0}, {1.3, -0.7}, {-2.1, 0.4}};
  const double h = 1e-4;
  std::vector<int> slots = dim == 2 ? std::vector<int>{0, 1, 2, 3, 4, 5} : std::vector<int>{0, 1, 2, 4};
  for (const auto& x : xs) {
    if (std::abs(rule(x, 0.0, ZVec{})) > 1e-12) return false;
    for (int s : slots)
      for (cplx dir : {cplx(1.0, 0.0), cplx(0.0, 1.0)}) {
        ZVec zp{}, zm{};
        zp[s] = h * dir;
        zm[s] = -h * dir;
        if (std::abs(rule(x, 0.0, zp) - rule(x, 0.0, zm)) / (2.0 * h) > tol) return false;
      }
  }
  return true;
}

double w1m_check(const ZRule& rule, const StateField& u, int M, double t) {
  const Grid& g = u.grid();
  if (!rule_vanishes_to_second_order(rule, g.dim()))
    throw ConfigError("w1m_check: rule does not vanish to second order at z = 0");
  auto z = state_z(u);
  StateField b(g);
  for (std::size_t i = 0; i < g.size(); ++i) b[i] = rule(g.point(i), t, z[i]);
  return w1m_norm(b, M);
}

}  // namespace qls
