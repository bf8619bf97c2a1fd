#include <doctest.h>

#include "qls/doi.hpp"
#include "qls/symbols.hpp"

using namespace qls;

namespace {
double cabs_max(const CVec& a, const CVec& b) { return std::max(std::abs(a[0] - b[0]), std::abs(a[1] - b[1])); }
}  // namespace

TEST_CASE("symbol algebra evaluates pointwise") {
  Symbol x0 = multiplication_symbol(2, [](const Vec& x, double) { return cplx(x[0]); }, nullptr, "x0");
  Symbol h = flat_hamiltonian(2);
  Vec x{0.5, -1.0}, xi{2.0, 3.0};
  CHECK(std::abs((x0 * h)(x, xi) - 0.5 * 13.0) < 1e-14);
  CHECK(std::abs((h - x0)(x, xi) - 12.5) < 1e-14);
  CHECK(std::abs((cplx(0, 2) * x0)(x, xi) - cplx(0, 1)) < 1e-14);
  CHECK(std::abs(exp(x0)(x, xi) - std::exp(0.5)) < 1e-14);
  CHECK(std::abs(shifted(x0, Vec{1.0, 0.0})(x, xi) + 0.5) < 1e-14);
  CHECK(std::abs(constant_symbol(2, 3.0)(x, xi) - 3.0) < 1e-14);
  CHECK((x0 * h).order() == 2.0);
}

TEST_CASE("analytic and difference gradients agree") {
  Symbol b = japanese_bracket_xi(2, 1.0);
  Symbol q = exp(shifted(flat_escape_symbol(2, 1.0).symbol, Vec{0.3, 0.2})) * b;
  for (Vec x : {Vec{0.1, 0.2}, Vec{-2.0, 1.5}})
    for (Vec xi : {Vec{3.0, -1.0}, Vec{0.5, 2.5}, Vec{40.0, 7.0}}) {
      CHECK(cabs_max(q.grad_x(x, xi), q.fd_grad_x(x, xi, 0.0, 1e-5)) < 1e-6 * std::max(1.0, std::abs(q(x, xi))));
      CHECK(cabs_max(q.grad_xi(x, xi), q.fd_grad_xi(x, xi, 0.0, 1e-5)) < 1e-6 * std::max(1.0, std::abs(q(x, xi))));
    }
}

TEST_CASE("cutoff theta") {
  Symbol th = cutoff_theta(2, 2.0);
  CHECK(std::abs(th(Vec{}, Vec{})) == 0.0);
  CHECK(std::abs(th(Vec{}, Vec{1.9, 0.0})) == 0.0);
  CHECK(std::abs(th(Vec{}, Vec{6.0, 0.0}) - 1.0) == 0.0);
  double mid = th(Vec{}, Vec{0.0, 3.0}).real();
  CHECK(mid > 0.0);
  CHECK(mid < 1.0);
  double prev = -1.0;
  for (double r = 0.0; r <= 5.0; r += 0.01) {
    double v = th(Vec{}, Vec{r / std::sqrt(2.0), r / std::sqrt(2.0)}).real();
    CHECK(v >= prev);
    prev = v;
  }
  CHECK_THROWS_AS(cutoff_theta(1, 0.0), ConfigError);
}

TEST_CASE("Poisson brackets") {
  Symbol h = flat_hamiltonian(2);
  Symbol hh = poisson_bracket(h, h);
  Symbol xdotxi(2, 1.0, [](const Vec& x, const Vec& xi, double) { return cplx(dot(x, xi)); }, "x.xi");
  Symbol hp = poisson_bracket(h, xdotxi);
  Symbol r = flat_escape_symbol(2, 1.0).symbol;
  Symbol hr = poisson_bracket(h, r);
  for (Vec x : {Vec{0.0, 0.0}, Vec{1.0, -2.0}, Vec{-3.0, 0.5}})
    for (Vec xi : {Vec{3.0, 1.0}, Vec{-4.0, 3.0}}) {
      CHECK(std::abs(hh(x, xi)) < 1e-12);
      CHECK(std::abs(hp(x, xi) - 2.0 * dot(xi, xi)) < 1e-6 * dot(xi, xi));
      double s = dot(x, xi) / norm(xi);
      CHECK(std::abs(hr(x, xi) - 2.0 * norm(xi) / (1.0 + s * s)) < 1e-6);
    }
}

TEST_CASE("seminorm estimates") {
  auto sample = SymbolSample::box(1, 5.0, 9, 0.1, 1e3, 20, 2);
  auto one = estimate_seminorms(constant_symbol(1, 1.0), 0.0, 2, 2, sample, 10.0);
  CHECK(one.pass());
  for (const auto& e : one.entries) {
    if (e.alpha == std::array<int, 2>{0, 0} && e.beta == std::array<int, 2>{0, 0}) {
      CHECK(e.measured == doctest::Approx(1.0));
    } else {
      CHECK(e.measured < 1e-12);
    }
  }
  auto jb = estimate_seminorms(japanese_bracket_xi(1, 1.0), 1.0, 2, 1, sample, 10.0);
  CHECK(jb.pass());
  CHECK(jb.entry({0, 0}, {0, 0}).measured == doctest::Approx(1.0).epsilon(0.05));
  Symbol cube(1, 3.0, [](const Vec&, const Vec& xi, double) { return cplx(std::pow(norm(xi), 3)); }, "|xi|^3");
  CHECK_FALSE(estimate_seminorms(cube, 1.0, 1, 0, sample, 10.0).pass());
}
