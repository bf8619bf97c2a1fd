#include "qls/symbols.hpp"

#include <algorithm>

namespace qls {

struct Symbol::Impl {
  int dim = 1;
  double order = 0.0;
  Eval eval;
  Grad dx;
  Grad dxi;
  std::string label;
  double hx = 1e-4;
  double hxi = 1e-4;
};

Symbol::Symbol(int dim, double order, Eval eval, std::string label) {
  if (dim != 1 && dim != 2) throw ConfigError("symbol dim must be 1 or 2");
  if (!eval) throw ConfigError("symbol needs an evaluation rule");
  auto impl = std::make_shared<Impl>();
  impl->dim = dim;
  impl->order = order;
  impl->eval = std::move(eval);
  impl->label = std::move(label);
  impl_ = std::move(impl);
}

Symbol Symbol::with_gradients(Grad dx, Grad dxi) const {
  auto impl = std::make_shared<Impl>(*impl_);
  impl->dx = std::move(dx);
  impl->dxi = std::move(dxi);
  return Symbol(std::shared_ptr<const Impl>(std::move(impl)));
}

Symbol Symbol::with_fd_steps(double hx, double hxi) const {
  if (!(hx > 0.0) || !(hxi > 0.0)) throw ConfigError("finite-difference steps must be positive");
  auto impl = std::make_shared<Impl>(*impl_);
  impl->hx = hx;
  impl->hxi = hxi;
  return Symbol(std::shared_ptr<const Impl>(std::move(impl)));
}

Symbol Symbol::relabeled(std::string label) const {
  auto impl = std::make_shared<Impl>(*impl_);
  impl->label = std::move(label);
  return Symbol(std::shared_ptr<const Impl>(std::move(impl)));
}

Symbol Symbol::with_order(double m) const {
  auto impl = std::make_shared<Impl>(*impl_);
  impl->order = m;
  return Symbol(std::shared_ptr<const Impl>(std::move(impl)));
}

int Symbol::dim() const noexcept { return impl_->dim; }
double Symbol::order() const noexcept { return impl_->order; }
const std::string& Symbol::label() const noexcept { return impl_->label; }
bool Symbol::has_analytic_gradients() const noexcept {
  return static_cast<bool>(impl_->dx) && static_cast<bool>(impl_->dxi);
}
double Symbol::fd_step_x() const noexcept { return impl_->hx; }
double Symbol::fd_step_xi() const noexcept { return impl_->hxi; }

cplx Symbol::operator()(const Vec& x, const Vec& xi, double t) const { return impl_->eval(x, xi, t); }

CVec Symbol::fd_grad_x(const Vec& x, const Vec& xi, double t, double h) const {
  CVec g{0.0, 0.0};
  for (int i = 0; i < impl_->dim; ++i) {
    Vec p = x, m = x;
    p[i] += h;
    m[i] -= h;
    g[i] = (impl_->eval(p, xi, t) - impl_->eval(m, xi, t)) / (2.0 * h);
  }
  return g;
}

CVec Symbol::fd_grad_xi(const Vec& x, const Vec& xi, double t, double h) const {
  CVec g{0.0, 0.0};
  for (int i = 0; i < impl_->dim; ++i) {
    Vec p = xi, m = xi;
    p[i] += h;
    m[i] -= h;
    g[i] = (impl_->eval(x, p, t) - impl_->eval(x, m, t)) / (2.0 * h);
  }
  return g;
}

CVec Symbol::grad_x(const Vec& x, const Vec& xi, double t) const {
  if (impl_->dx) return impl_->dx(x, xi, t);
  return fd_grad_x(x, xi, t, impl_->hx);
}

CVec Symbol::grad_xi(const Vec& x, const Vec& xi, double t) const {
  if (impl_->dxi) return impl_->dxi(x, xi, t);
  // Relative step: symbol derivatives scale like 1/|xi|.
  return fd_grad_xi(x, xi, t, impl_->hxi * (1.0 + norm(xi)));
}

// ---------------------------------------------------------------------------

Symbol constant_symbol(int dim, cplx c) {
  auto zero = [](const Vec&, const Vec&, double) { return CVec{0.0, 0.0}; };
  return Symbol(dim, 0.0, [c](const Vec&, const Vec&, double) { return c; }, "const")
      .with_gradients(zero, zero);
}

Symbol multiplication_symbol(int dim, std::function<cplx(const Vec&, double)> f,
                             std::function<CVec(const Vec&, double)> df, std::string label) {
  Symbol s(dim, 0.0, [f](const Vec& x, const Vec&, double t) { return f(x, t); }, std::move(label));
  if (df) {
    s = s.with_gradients([df](const Vec& x, const Vec&, double t) { return df(x, t); },
                         [](const Vec&, const Vec&, double) { return CVec{0.0, 0.0}; });
  }
  return s;
}

Symbol multiplier_symbol(int dim, double order, std::function<cplx(const Vec&)> f,
                         std::function<CVec(const Vec&)> df, std::string label) {
  Symbol s(dim, order, [f](const Vec&, const Vec& xi, double) { return f(xi); }, std::move(label));
  if (df) {
    s = s.with_gradients([](const Vec&, const Vec&, double) { return CVec{0.0, 0.0}; },
                         [df](const Vec&, const Vec& xi, double) { return df(xi); });
  }
  return s;
}

namespace {

CVec add(const CVec& a, const CVec& b) { return {a[0] + b[0], a[1] + b[1]}; }
CVec scale(cplx s, const CVec& a) { return {s * a[0], s * a[1]}; }

std::string paren(const Symbol& s) { return "(" + s.label() + ")"; }

void check_dims(const Symbol& a, const Symbol& b) {
  if (a.dim() != b.dim()) throw ConfigError("symbol dimension mismatch");
}

}  // namespace

Symbol operator+(const Symbol& a, const Symbol& b) {
  check_dims(a, b);
  Symbol s(a.dim(), std::max(a.order(), b.order()),
           [a, b](const Vec& x, const Vec& xi, double t) { return a(x, xi, t) + b(x, xi, t); },
           paren(a) + "+" + paren(b));
  if (a.has_analytic_gradients() && b.has_analytic_gradients()) {
    s = s.with_gradients(
        [a, b](const Vec& x, const Vec& xi, double t) { return add(a.grad_x(x, xi, t), b.grad_x(x, xi, t)); },
        [a, b](const Vec& x, const Vec& xi, double t) { return add(a.grad_xi(x, xi, t), b.grad_xi(x, xi, t)); });
  }
  return s;
}

Symbol operator*(cplx c, const Symbol& a) {
  Symbol s(a.dim(), a.order(),
           [a, c](const Vec& x, const Vec& xi, double t) { return c * a(x, xi, t); },
           "c*" + paren(a));
  if (a.has_analytic_gradients()) {
    s = s.with_gradients(
        [a, c](const Vec& x, const Vec& xi, double t) { return scale(c, a.grad_x(x, xi, t)); },
        [a, c](const Vec& x, const Vec& xi, double t) { return scale(c, a.grad_xi(x, xi, t)); });
  }
  return s;
}

Symbol operator-(const Symbol& a, const Symbol& b) { return a + cplx(-1.0) * b; }

Symbol operator*(const Symbol& a, const Symbol& b) {
  check_dims(a, b);
  Symbol s(a.dim(), a.order() + b.order(),
           [a, b](const Vec& x, const Vec& xi, double t) { return a(x, xi, t) * b(x, xi, t); },
           paren(a) + "*" + paren(b));
  if (a.has_analytic_gradients() && b.has_analytic_gradients()) {
    s = s.with_gradients(
        [a, b](const Vec& x, const Vec& xi, double t) {
          return add(scale(a(x, xi, t), b.grad_x(x, xi, t)), scale(b(x, xi, t), a.grad_x(x, xi, t)));
        },
        [a, b](const Vec& x, const Vec& xi, double t) {
          return add(scale(a(x, xi, t), b.grad_xi(x, xi, t)), scale(b(x, xi, t), a.grad_xi(x, xi, t)));
        });
  }
  return s;
}

Symbol exp(const Symbol& a) {
  Symbol s(a.dim(), 0.0, [a](const Vec& x, const Vec& xi, double t) { return std::exp(a(x, xi, t)); },
           "exp" + paren(a));
  if (a.has_analytic_gradients()) {
    s = s.with_gradients(
        [a](const Vec& x, const Vec& xi, double t) { return scale(std::exp(a(x, xi, t)), a.grad_x(x, xi, t)); },
        [a](const Vec& x, const Vec& xi, double t) { return scale(std::exp(a(x, xi, t)), a.grad_xi(x, xi, t)); });
  }
  return s;
}

Symbol shifted(const Symbol& q, const Vec& c) {
  Symbol s(q.dim(), q.order(), [q, c](const Vec& x, const Vec& xi, double t) { return q(x - c, xi, t); },
           q.label() + "@shift");
  if (q.has_analytic_gradients()) {
    s = s.with_gradients([q, c](const Vec& x, const Vec& xi, double t) { return q.grad_x(x - c, xi, t); },
                         [q, c](const Vec& x, const Vec& xi, double t) { return q.grad_xi(x - c, xi, t); });
  }
  return s.with_fd_steps(q.fd_step_x(), q.fd_step_xi());
}

// ---------------------------------------------------------------------------

namespace {
inline double sigma(double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; }
inline double dsigma(double t) { return t > 0.0 ? std::exp(-1.0 / t) / (t * t) : 0.0; }
}  // namespace

double smooth_step(double t) {
  if (t <= 0.0) return 0.0;
  if (t >= 1.0) return 1.0;
  double a = sigma(t), b = sigma(1.0 - t);
  return a / (a + b);
}

double smooth_step_derivative(double t) {
  if (t <= 0.0 || t >= 1.0) return 0.0;
  double a = sigma(t), b = sigma(1.0 - t);
  double da = dsigma(t), db = -dsigma(1.0 - t);
  return (da * b - a * db) / ((a + b) * (a + b));
}

double cutoff_phi(double r) { return smooth_step(2.0 - r); }

Symbol cutoff_theta(int dim, double R) {
  if (!(R > 0.0)) throw ConfigError("cutoff radius must be positive");
  // theta = 1 - g(2 - r) = g(r - 1) with r = |xi/R|.
  auto f = [R](const Vec& xi) {
    Vec y{xi[0] / R, xi[1] / R};
    return cplx(1.0 - cutoff_phi(norm(y)));
  };
  auto df = [R](const Vec& xi) {
    Vec y{xi[0] / R, xi[1] / R};
    double r = norm(y);
    if (r <= 1.0 || r >= 2.0) return CVec{0.0, 0.0};
    double g = smooth_step_derivative(2.0 - r) / (R * r);
    return CVec{g * y[0], g * y[1]};
  };
  return multiplier_symbol(dim, 0.0, f, df, "theta_R");
}

Symbol japanese_bracket_xi(int dim, double s) {
  return multiplier_symbol(
      dim, s, [s](const Vec& xi) { return cplx(std::pow(1.0 + dot(xi, xi), 0.5 * s)); },
      [s](const Vec& xi) {
        double c = s * std::pow(1.0 + dot(xi, xi), 0.5 * s - 1.0);
        return CVec{c * xi[0], c * xi[1]};
      },
      "<xi>^s");
}

Symbol flat_hamiltonian(int dim) {
  return multiplier_symbol(
      dim, 2.0, [](const Vec& xi) { return cplx(dot(xi, xi)); },
      [](const Vec& xi) { return CVec{2.0 * xi[0], 2.0 * xi[1]}; }, "|xi|^2");
}

Symbol poisson_bracket(const Symbol& h, const Symbol& p) {
  check_dims(h, p);
  int dim = h.dim();
  return Symbol(
      dim, h.order() + p.order() - 1.0,
      [h, p, dim](const Vec& x, const Vec& xi, double t) {
        CVec hxi = h.grad_xi(x, xi, t), hx = h.grad_x(x, xi, t);
        CVec pxi = p.grad_xi(x, xi, t), px = p.grad_x(x, xi, t);
        cplx acc = 0.0;
        for (int i = 0; i < dim; ++i) acc += hxi[i] * px[i] - hx[i] * pxi[i];
        return acc;
      },
      "{" + h.label() + "," + p.label() + "}");
}

// ---------------------------------------------------------------------------

SymbolSample SymbolSample::box(int dim, double x_max, int nx, double xi_min, double xi_max,
                               int n_mag, int n_dir) {
  if (nx < 1 || n_mag < 1) throw ConfigError("symbol sample needs at least one point");
  if (!(xi_min > 0.0) || xi_max < xi_min) throw ConfigError("symbol sample xi range invalid");
  SymbolSample s;
  s.dim = dim;
  std::vector<double> axis(nx);
  for (int i = 0; i < nx; ++i)
    axis[i] = nx == 1 ? 0.0 : -x_max + 2.0 * x_max * i / (nx - 1);
  for (int i = 0; i < nx; ++i) {
    if (dim == 1) {
      s.xs.push_back({axis[i], 0.0});
    } else {
      for (int j = 0; j < nx; ++j) s.xs.push_back({axis[i], axis[j]});
    }
  }
  std::vector<Vec> dirs;
  if (dim == 1) {
    dirs = {{1.0, 0.0}, {-1.0, 0.0}};
  } else {
    for (int j = 0; j < n_dir; ++j) {
      double th = 2.0 * pi * j / n_dir;
      dirs.push_back({std::cos(th), std::sin(th)});
    }
  }
  for (int i = 0; i < n_mag; ++i) {
    double r = n_mag == 1 ? xi_min : xi_min * std::pow(xi_max / xi_min, static_cast<double>(i) / (n_mag - 1));
    for (const auto& d : dirs) s.xis.push_back(r * d);
  }
  return s;
}

bool SeminormReport::pass() const {
  return std::all_of(entries.begin(), entries.end(), [](const SeminormEntry& e) { return e.pass; });
}

const SeminormEntry& SeminormReport::entry(std::array<int, 2> alpha, std::array<int, 2> beta) const {
  for (const auto& e : entries)
    if (e.alpha == alpha && e.beta == beta) return e;
  throw ConfigError("seminorm entry not present");
}

namespace {

// Binomial-weighted centered stencil for an n-th derivative: offsets (n/2 - j), j = 0..n.
struct Stencil {
  std::vector<double> offset;
  std::vector<double> weight;
};

Stencil centered(int n) {
  Stencil s;
  double c = 1.0;
  for (int j = 0; j <= n; ++j) {
    s.offset.push_back(0.5 * n - j);
    s.weight.push_back(((j & 1) ? -1.0 : 1.0) * c);
    c = c * (n - j) / (j + 1);
  }
  return s;
}

std::vector<std::array<int, 2>> multi_indices(int dim, int max_order) {
  std::vector<std::array<int, 2>> out;
  for (int a = 0; a <= max_order; ++a) {
    if (dim == 1) {
      out.push_back({a, 0});
    } else {
      for (int b = 0; a + b <= max_order; ++b) out.push_back({a, b});
    }
  }
  return out;
}

}  // namespace

SeminormReport estimate_seminorms(const Symbol& q, double m, int max_alpha, int max_beta,
                                  const SymbolSample& sample, double threshold, double rel_step) {
  if (max_alpha < 0 || max_beta < 0) throw ConfigError("seminorm orders must be nonnegative");
  SeminormReport rep;
  rep.order_claimed = m;
  rep.threshold = threshold;
  int dim = q.dim();
  auto alphas = multi_indices(dim, max_alpha);
  auto betas = multi_indices(dim, max_beta);
  for (const auto& al : alphas) {
    for (const auto& be : betas) {
      // Stencils per axis: xi0, xi1, x0, x1.
      std::array<Stencil, 4> st{centered(al[0]), centered(al[1]), centered(be[0]), centered(be[1])};
      int total_alpha = al[0] + al[1];
      double sup = 0.0;
      for (const auto& x : sample.xs) {
        for (const auto& xi : sample.xis) {
          double hxi = rel_step * (1.0 + norm(xi));
          double hx = rel_step;
          cplx acc = 0.0;
          for (std::size_t a0 = 0; a0 < st[0].offset.size(); ++a0)
            for (std::size_t a1 = 0; a1 < st[1].offset.size(); ++a1)
              for (std::size_t b0 = 0; b0 < st[2].offset.size(); ++b0)
                for (std::size_t b1 = 0; b1 < st[3].offset.size(); ++b1) {
                  Vec xx{x[0] + hx * st[2].offset[b0], x[1] + hx * st[3].offset[b1]};
                  Vec kk{xi[0] + hxi * st[0].offset[a0], xi[1] + hxi * st[1].offset[a1]};
                  double w = st[0].weight[a0] * st[1].weight[a1] * st[2].weight[b0] * st[3].weight[b1];
                  acc += w * q(xx, kk, 0.0);
                }
          double d = std::abs(acc) / (std::pow(hxi, total_alpha) * std::pow(hx, be[0] + be[1]));
          double v = d * std::pow(1.0 + norm(xi), total_alpha - m);
          if (!std::isfinite(v)) throw ComputationError("seminorm estimate: non-finite derivative sample");
          sup = std::max(sup, v);
        }
      }
      rep.entries.push_back({al, be, sup, sup <= threshold});
    }
  }
  return rep;
}

}  // namespace qls
