#include "qls/hamiltonian.hpp"

#include <algorithm>
#include <memory>
#include <ostream>

#include "qls/kernels.hpp"

namespace qls {

MetricField flat_metric(int dim) {
  MetricField m;
  m.dim = dim;
  m.name = "flat";
  m.value = [dim](const Vec&, double) { return Mat2::scalar(1.0, dim); };
  m.gradient = [](const Vec&, double) { return std::array<Mat2, 2>{}; };
  return m;
}

MetricField radial_metric(int dim, std::string name, std::function<double(double)> g,
                          std::function<double(double)> dg) {
  MetricField m;
  m.dim = dim;
  m.name = std::move(name);
  m.value = [dim, g](const Vec& x, double) { return Mat2::scalar(g(norm(x)), dim); };
  m.gradient = [dim, dg](const Vec& x, double) {
    std::array<Mat2, 2> out{};
    double r = norm(x);
    if (r == 0.0) return out;
    double d = dg(r) / r;
    for (int j = 0; j < dim; ++j) out[j] = Mat2::scalar(d * x[j], dim);
    return out;
  };
  return m;
}

MetricField gaussian_bump_metric(int dim, double amp, double width) {
  double w2 = width * width;
  return radial_metric(
      dim, "gaussian-bump", [=](double r) { return 1.0 + amp * std::exp(-r * r / w2); },
      [=](double r) { return -2.0 * amp * r / w2 * std::exp(-r * r / w2); });
}

double compact_bump(double s) {
  s = std::abs(s);
  if (s >= 1.0) return 0.0;
  return std::exp(1.0 - 1.0 / (1.0 - s * s));
}

double compact_bump_derivative(double s) {
  double as = std::abs(s);
  if (as >= 1.0) return 0.0;
  double q = 1.0 - s * s;
  return compact_bump(s) * (-2.0 * s / (q * q));
}

MetricField compact_bump_metric(int dim, double amp, double radius) {
  return radial_metric(
      dim, "compact-bump", [=](double r) { return 1.0 + amp * compact_bump(r / radius); },
      [=](double r) { return amp * compact_bump_derivative(r / radius) / radius; });
}

MetricField circular_trap_metric(int dim, double depth, double r0, int power) {
  return radial_metric(
      dim, "circular-trap",
      [=](double r) { return 1.0 - depth * std::exp(-std::pow(r / r0, power)); },
      [=](double r) {
        double u = std::pow(r / r0, power);
        return depth * std::exp(-u) * power * u / r;
      });
}

MetricField time_modulated_metric(const MetricField& base, std::function<double(const Vec&)> rho,
                                  std::function<Vec(const Vec&)> drho) {
  MetricField m;
  m.dim = base.dim;
  m.name = base.name + "+t*rho";
  int dim = base.dim;
  m.value = [=](const Vec& x, double t) {
    Mat2 a = base.value(x, t);
    double r = t * rho(x);
    a(0, 0) += r;
    if (dim == 2) a(1, 1) += r;
    return a;
  };
  m.gradient = [=](const Vec& x, double t) {
    auto g = base.gradient(x, t);
    Vec d = drho(x);
    for (int j = 0; j < dim; ++j) {
      g[j](0, 0) += t * d[j];
      if (dim == 2) g[j](1, 1) += t * d[j];
    }
    return g;
  };
  return m;
}

MetricField combined_metric(const MetricField& a0, const MetricField& a1, double eta) {
  if (a0.dim != a1.dim) throw ConfigError("metric dimension mismatch");
  MetricField m;
  m.dim = a0.dim;
  m.name = a0.name + "+eta*" + a1.name;
  m.value = [=](const Vec& x, double t) {
    Mat2 a = a0.value(x, t), b = a1.value(x, t);
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) a(i, j) += eta * b(i, j);
    return a;
  };
  m.gradient = [=](const Vec& x, double t) {
    auto a = a0.gradient(x, t);
    auto b = a1.gradient(x, t);
    for (int k = 0; k < 2; ++k)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) a[k](i, j) += eta * b[k](i, j);
    return a;
  };
  return m;
}

namespace {

// Periodic grid data with 4-point Lagrange interpolation per axis.
struct SampledData {
  Grid grid;
  std::array<std::vector<double>, 3> comp;        // a00, a01, a11
  std::array<std::array<std::vector<double>, 3>, 2> grad;  // grad[axis][comp]

  explicit SampledData(const Grid& g) : grid(g) {}

  static void weights(double f, double w[4]) {
    w[0] = -f * (f - 1.0) * (f - 2.0) / 6.0;
    w[1] = (f + 1.0) * (f - 1.0) * (f - 2.0) / 2.0;
    w[2] = -(f + 1.0) * f * (f - 2.0) / 2.0;
    w[3] = (f + 1.0) * f * (f - 1.0) / 6.0;
  }

  double interp(const std::vector<double>& v, const Vec& x) const {
    int n = grid.points_per_axis();
    double L = grid.half_length(), h = grid.spacing();
    auto locate = [&](double xv, int& i, double& f) {
      double u = (periodic_offset(xv, L) + L) / h;
      i = static_cast<int>(std::floor(u));
      f = u - i;
    };
    auto wrap = [n](int i) { return ((i % n) + n) % n; };
    int i0;
    double f0, w0[4];
    locate(x[0], i0, f0);
    weights(f0, w0);
    if (grid.dim() == 1) {
      double acc = 0.0;
      for (int a = 0; a < 4; ++a) acc += w0[a] * v[wrap(i0 - 1 + a)];
      return acc;
    }
    int i1;
    double f1, w1[4];
    locate(x[1], i1, f1);
    weights(f1, w1);
    double acc = 0.0;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        acc += w0[a] * w1[b] * v[grid.flat(wrap(i0 - 1 + a), wrap(i1 - 1 + b))];
    return acc;
  }
};

std::vector<double> fd4(const Grid& g, const std::vector<double>& v, int axis) {
  int n = g.points_per_axis();
  double h = g.spacing();
  std::vector<double> out(v.size());
  auto wrap = [n](int i) { return ((i % n) + n) % n; };
  for (std::size_t idx = 0; idx < v.size(); ++idx) {
    auto p = g.unflat(idx);
    auto at = [&](int off) {
      auto q = p;
      q[axis] = wrap(q[axis] + off);
      return v[g.flat(q[0], q[1])];
    };
    out[idx] = (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h);
  }
  return out;
}

}  // namespace

MetricField sampled_metric(const Grid& g, std::vector<double> a00, std::vector<double> a01,
                           std::vector<double> a11, std::string name) {
  if (a00.size() != g.size()) throw ConfigError("sampled_metric: a00 length mismatch");
  if (a01.empty()) a01.assign(g.size(), 0.0);
  if (a11.empty()) a11.assign(g.size(), g.dim() == 2 ? 1.0 : 0.0);
  if (a01.size() != g.size() || a11.size() != g.size())
    throw ConfigError("sampled_metric: component length mismatch");
  auto data = std::make_shared<SampledData>(g);
  data->comp = {std::move(a00), std::move(a01), std::move(a11)};
  for (int ax = 0; ax < g.dim(); ++ax)
    for (int c = 0; c < 3; ++c) data->grad[ax][c] = fd4(g, data->comp[c], ax);
  int dim = g.dim();
  MetricField m;
  m.dim = dim;
  m.name = std::move(name);
  m.value = [data, dim](const Vec& x, double) {
    Mat2 a;
    a(0, 0) = data->interp(data->comp[0], x);
    if (dim == 2) {
      a(0, 1) = a(1, 0) = data->interp(data->comp[1], x);
      a(1, 1) = data->interp(data->comp[2], x);
    }
    return a;
  };
  m.gradient = [data, dim](const Vec& x, double) {
    std::array<Mat2, 2> out{};
    for (int ax = 0; ax < dim; ++ax) {
      out[ax](0, 0) = data->interp(data->grad[ax][0], x);
      if (dim == 2) {
        out[ax](0, 1) = out[ax](1, 0) = data->interp(data->grad[ax][1], x);
        out[ax](1, 1) = data->interp(data->grad[ax][2], x);
      }
    }
    return out;
  };
  return m;
}

// ---------------------------------------------------------------------------

Symbol principal_symbol(const MetricField& a, double t) {
  int dim = a.dim;
  Symbol h(dim, 2.0, [a, t](const Vec& x, const Vec& xi, double) { return cplx(a.value(x, t).quad(xi)); },
           "h[" + a.name + "]");
  return h.with_gradients(
      [a, t, dim](const Vec& x, const Vec& xi, double) {
        auto g = a.gradient(x, t);
        CVec out{0.0, 0.0};
        for (int j = 0; j < dim; ++j) out[j] = g[j].quad(xi);
        return out;
      },
      [a, t](const Vec& x, const Vec& xi, double) {
        Vec v = a.value(x, t).apply(xi);
        return CVec{2.0 * v[0], 2.0 * v[1]};
      });
}

double hamiltonian_value(const MetricField& a, const Vec& x, const Vec& xi, double t) {
  return a.value(x, t).quad(xi);
}

namespace {

struct Phase {
  Vec X;
  Vec Xi;
};

Phase rhs(const MetricField& a, const Phase& p, double t) {
  Mat2 A = a.value(p.X, t);
  auto G = a.gradient(p.X, t);
  Vec dX = 2.0 * A.apply(p.Xi);
  Vec dXi{-G[0].quad(p.Xi), a.dim == 2 ? -G[1].quad(p.Xi) : 0.0};
  return {dX, dXi};
}

Phase axpy(const Phase& p, double s, const Phase& d) { return {p.X + s * d.X, p.Xi + s * d.Xi}; }

Phase rk4(const MetricField& a, const Phase& p, double ds, double t) {
  Phase k1 = rhs(a, p, t);
  Phase k2 = rhs(a, axpy(p, 0.5 * ds, k1), t);
  Phase k3 = rhs(a, axpy(p, 0.5 * ds, k2), t);
  Phase k4 = rhs(a, axpy(p, ds, k3), t);
  Phase out = p;
  for (int i = 0; i < 2; ++i) {
    out.X[i] += ds / 6.0 * (k1.X[i] + 2.0 * k2.X[i] + 2.0 * k3.X[i] + k4.X[i]);
    out.Xi[i] += ds / 6.0 * (k1.Xi[i] + 2.0 * k2.Xi[i] + 2.0 * k3.Xi[i] + k4.Xi[i]);
  }
  return out;
}

// One step of size ds, halved recursively while the per-step h drift exceeds tol.
Phase advance(const MetricField& a, const Phase& p, double ds, const RayOptions& opt, int depth) {
  double h0 = a.value(p.X, opt.t).quad(p.Xi);
  Phase trial = rk4(a, p, ds, opt.t);
  double h1 = a.value(trial.X, opt.t).quad(trial.Xi);
  if (!std::isfinite(h1)) throw ComputationError("ray integration: non-finite state");
  if (std::abs(h1 - h0) <= opt.drift_tol * std::abs(h0)) return trial;
  if (depth >= opt.max_halvings)
    throw ComputationError("ray integration: step rejected after maximal halving");
  Phase mid = advance(a, p, 0.5 * ds, opt, depth + 1);
  return advance(a, mid, 0.5 * ds, opt, depth + 1);
}

void check_start(const MetricField& a, const Vec& xi0) {
  if (norm(xi0) < 1e-8) throw ConfigError("ray covector is degenerate (|xi0| < 1e-8)");
  if (!a.value || !a.gradient) throw ConfigError("metric lacks value or gradient rules");
}

struct Trace {
  bool escaped = false;
  double exit = -1.0;
  double drift = 0.0;
  double max_r = 0.0;
};

Trace trace(const MetricField& a, const Vec& x0, const Vec& xi0, double ds, double budget, double R,
            const RayOptions& opt) {
  Trace out;
  Phase p{x0, xi0};
  double h0 = a.value(x0, opt.t).quad(xi0);
  double r_prev = norm(x0);
  out.max_r = r_prev;
  if (r_prev > R) {
    out.escaped = true;
    out.exit = 0.0;
    return out;
  }
  double s = 0.0;
  while (s < budget - 1e-12) {
    double step = std::min(std::abs(ds), budget - s);
    p = advance(a, p, ds < 0 ? -step : step, opt, 0);
    if (norm(p.Xi) < 1e-8) throw ComputationError("ray integration: |Xi| collapsed below 1e-8");
    double h = a.value(p.X, opt.t).quad(p.Xi);
    out.drift = std::max(out.drift, std::abs(h - h0) / std::abs(h0));
    double r = norm(p.X);
    out.max_r = std::max(out.max_r, r);
    if (r > R) {
      out.escaped = true;
      out.exit = s + step * (R - r_prev) / (r - r_prev);
      return out;
    }
    s += step;
    r_prev = r;
  }
  return out;
}

RayRecord classify_one(const MetricField& a, const Vec& x0, const Vec& xi0, double R, double budget,
                       double ds, const RayOptions& opt) {
  RayRecord rec;
  rec.x0 = x0;
  rec.xi0 = xi0;
  try {
    check_start(a, xi0);
    Trace f = trace(a, x0, xi0, ds, budget, R, opt);
    Trace b = trace(a, x0, xi0, -ds, budget, R, opt);
    rec.escaped_forward = f.escaped;
    rec.escaped_backward = b.escaped;
    rec.exit_forward = f.exit;
    rec.exit_backward = b.exit;
    rec.h_drift = std::max(f.drift, b.drift);
    rec.max_radius = std::max(f.max_r, b.max_r);
    rec.status = f.escaped && b.escaped ? RayStatus::escaped : RayStatus::undetermined;
  } catch (const std::exception& e) {
    rec.status = RayStatus::failed;
    rec.error = e.what();
  }
  return rec;
}

RayVerdict aggregate(std::vector<RayRecord> rays, double R, double budget) {
  RayVerdict v;
  v.escape_radius = R;
  v.s_budget = budget;
  v.rays = std::move(rays);
  v.nontrapping_on_sample = true;
  double worst_time = -1.0;
  bool found_bad = false;
  for (std::size_t i = 0; i < v.rays.size(); ++i) {
    const auto& r = v.rays[i];
    if (r.status == RayStatus::undetermined) ++v.undetermined;
    if (r.status == RayStatus::failed) ++v.failed;
    if (r.status != RayStatus::escaped) {
      v.nontrapping_on_sample = false;
      if (!found_bad) {
        v.worst_ray = i;
        found_bad = true;
      }
    } else if (!found_bad) {
      double t = std::max(r.exit_forward, r.exit_backward);
      if (t > worst_time) {
        worst_time = t;
        v.worst_ray = i;
      }
    }
  }
  return v;
}

}  // namespace

std::vector<RayState> integrate_ray(const MetricField& a, const Vec& x0, const Vec& xi0, double ds,
                                    double s_max, const RayOptions& opt) {
  check_start(a, xi0);
  if (ds == 0.0 || !std::isfinite(ds)) throw ConfigError("ray step must be nonzero");
  if (s_max < 0.0) throw ConfigError("ray horizon must be nonnegative");
  std::vector<RayState> out;
  out.push_back({x0, xi0, 0.0});
  Phase p{x0, xi0};
  double s = 0.0;
  double dir = ds < 0 ? -1.0 : 1.0;
  double step_abs = std::abs(ds);
  while (s < s_max - 1e-12 * std::max(1.0, s_max)) {
    double step = std::min(step_abs, s_max - s);
    p = advance(a, p, dir * step, opt, 0);
    if (norm(p.Xi) < 1e-8) throw ComputationError("ray integration: |Xi| collapsed below 1e-8");
    s += step;
    out.push_back({p.X, p.Xi, dir * s});
  }
  return out;
}

double relative_h_drift(const MetricField& a, const std::vector<RayState>& path, double t) {
  if (path.empty()) return 0.0;
  double h0 = a.value(path[0].X, t).quad(path[0].Xi);
  double d = 0.0;
  for (const auto& st : path) d = std::max(d, std::abs(a.value(st.X, t).quad(st.Xi) - h0));
  return d / std::abs(h0);
}

const char* to_string(RayStatus s) {
  switch (s) {
    case RayStatus::escaped: return "escaped";
    case RayStatus::undetermined: return "undetermined";
    case RayStatus::failed: return "failed";
  }
  return "?";
}

RaySample default_ray_sample(int dim, double extent, int positions, int directions) {
  if (positions < 1) throw ConfigError("ray sample needs positions >= 1");
  RaySample s;
  std::vector<double> axis(positions);
  for (int i = 0; i < positions; ++i)
    axis[i] = positions == 1 ? 0.0 : -extent + 2.0 * extent * i / (positions - 1);
  std::vector<Vec> dirs;
  if (dim == 1) {
    dirs = {{1.0, 0.0}, {-1.0, 0.0}};
  } else {
    for (int j = 0; j < directions; ++j) {
      double th = 2.0 * pi * j / directions;
      dirs.push_back({std::cos(th), std::sin(th)});
    }
  }
  for (int i = 0; i < positions; ++i) {
    for (int j = 0; j < (dim == 2 ? positions : 1); ++j) {
      Vec x{axis[i], dim == 2 ? axis[j] : 0.0};
      for (const auto& d : dirs) {
        s.x0.push_back(x);
        s.xi0.push_back(d);
      }
    }
  }
  return s;
}

RayVerdict classify_nontrapping(const MetricField& a, const RaySample& sample, double escape_radius,
                                double s_budget, double ds, const RayOptions& opt) {
  if (sample.x0.size() != sample.xi0.size()) throw ConfigError("ray sample size mismatch");
  std::vector<RayRecord> rays(sample.x0.size());
  const auto n = static_cast<std::ptrdiff_t>(rays.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    rays[i] = classify_one(a, sample.x0[i], sample.xi0[i], escape_radius, s_budget, ds, opt);
  return aggregate(std::move(rays), escape_radius, s_budget);
}

RayVerdict classify_nontrapping_serial(const MetricField& a, const RaySample& sample,
                                       double escape_radius, double s_budget, double ds,
                                       const RayOptions& opt) {
  if (sample.x0.size() != sample.xi0.size()) throw ConfigError("ray sample size mismatch");
  std::vector<RayRecord> rays;
  rays.reserve(sample.x0.size());
  for (std::size_t i = 0; i < sample.x0.size(); ++i)
    rays.push_back(classify_one(a, sample.x0[i], sample.xi0[i], escape_radius, s_budget, ds, opt));
  return aggregate(std::move(rays), escape_radius, s_budget);
}

void write_rays_csv(std::ostream& os, const RayVerdict& v) {
  os << "id,x0_0,x0_1,xi0_0,xi0_1,escaped_fwd,escaped_bwd,exit_fwd,exit_bwd,h_drift,max_radius,status\n";
  char buf[512];
  for (std::size_t i = 0; i < v.rays.size(); ++i) {
    const auto& r = v.rays[i];
    std::snprintf(buf, sizeof buf, "%zu,%.12e,%.12e,%.12e,%.12e,%d,%d,%.12e,%.12e,%.6e,%.12e,%s\n", i,
                  r.x0[0], r.x0[1], r.xi0[0], r.xi0[1], r.escaped_forward ? 1 : 0,
                  r.escaped_backward ? 1 : 0, r.exit_forward, r.exit_backward, r.h_drift,
                  r.max_radius, to_string(r.status));
    os << buf;
  }
}

}  // namespace qls
