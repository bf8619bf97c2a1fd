#include <doctest.h>

#include "qls/coeffs.hpp"

using namespace qls;

TEST_CASE("registry") {
  auto names = registry_names();
  CHECK(names.size() == 6u);
  for (const auto& n : names) {
    auto cs = make_coefficients(n, 1);
    CHECK(cs.name == n);
  }
  CHECK_THROWS_AS(make_coefficients("nope", 1), ConfigError);
  CHECK_THROWS_AS(make_coefficients("flat", 3), ConfigError);
  CHECK_THROWS_AS(make_coefficients("flat", 1, json{{"bogus", 1.0}}), ConfigError);
  CHECK_THROWS_AS(make_coefficients("cubic-semilinear", 1, json{{"kappa", "x"}}), ConfigError);
  CHECK_THROWS_AS(make_coefficients("bump-metric", 1, json{{"amplitude", -1.5}}), ConfigError);
  CHECK_THROWS_AS(make_coefficients("bump-metric", 1, json{{"profile", "square"}}), ConfigError);
  CHECK_THROWS_AS(make_coefficients("trap-metric", 2, json{{"depth", 1.0}}), ConfigError);
}

TEST_CASE("freezing at the zero state") {
  Grid g(1, 8.0, 64);
  auto cs = make_coefficients("bump-metric", 1, json{{"amplitude", 0.2}, {"radius", 3.0}});
  auto fz = freeze_at_state(cs, StateField(g), 0.0);
  MetricField m = compact_bump_metric(1, 0.2, 3.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    CHECK(std::abs(fz.a[0][i].real() - m(g.point(i))(0, 0)) < 1e-14);
    CHECK(std::abs(fz.b1[0][i]) == 0.0);
    CHECK(std::abs(fz.c1[i]) == 0.0);
  }
  CHECK(fz.max_z == 0.0);

  // cubic semilinear: c1 = i kappa |u|^2 and the rhs is i u'' + i kappa |u|^2 u
  auto cub = make_coefficients("cubic-semilinear", 1, json{{"kappa", 2.0}});
  StateField u = StateField::sample(g, [](const Vec& x) { return cplx(std::exp(-x[0] * x[0]), 0.3 * x[0] * std::exp(-x[0] * x[0])); });
  StateField rhs = equation_rhs(cub, u, 0.0);
  StateField lap = laplacian(u);
  for (std::size_t i = 0; i < g.size(); ++i)
    CHECK(std::abs(rhs[i] - cplx(0.0, 1.0) * (lap[i] + 2.0 * std::norm(u[i]) * u[i])) < 1e-12);

  // leaving the ball is reported
  auto small = make_coefficients("quadratic-b1", 1, json{{"M", 0.01}});
  CHECK_THROWS_AS(freeze_at_state(small, u, 0.0), ComputationError);
}

TEST_CASE("assumption validation") {
  Grid g(1, 16.0, 64);
  ValidationOptions opt;
  opt.positions = 4;
  opt.directions = 2;
  auto zs = default_z_sample(1, 1.0, 3);
  auto flat = validate_assumptions(make_coefficients("flat", 1), g, zs, nullptr, opt);
  CHECK(flat.pass);
  CHECK(flat.children.size() == 7u);
  CHECK(validate_assumptions(make_coefficients("quadratic-b1", 1), g, zs, nullptr, opt).pass);

  // a first-order term that does not vanish at z = 0
  auto bad = make_coefficients("flat", 1);
  bad.b1 = [](const Vec&, double, const ZVec&) { return CVec{cplx(0.1), cplx(0.0)}; };
  auto rep = validate_assumptions(bad, g, zs, nullptr, opt);
  CHECK_FALSE(rep.pass);
  CHECK_FALSE(rep.child("NL6").pass);
  CHECK(rep.child("NL1").pass);

  auto vm = validate_metric(gaussian_bump_metric(1, 0.3, 2.0), g, opt);
  CHECK(vm.pass);
  auto vl = validate_linear(freeze_at_state(make_coefficients("flat", 1), StateField(g), 0.0), opt);
  CHECK(vl.pass);
  CHECK(vl.child("L4").value("sum_beta0") == 0.0);
}

TEST_CASE("cube decomposition") {
  Grid g(1, 8.0, 128);
  CubePartition part(g, 1.0);
  auto pou = partition_of_unity(part);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double s = 0.0;
    for (std::size_t q = 0; q < pou.size(); ++q)
      for (std::size_t k = 0; k < part.cubes()[q].double_points.size(); ++k)
        if (part.cubes()[q].double_points[k] == i) s += pou[q][k];
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }

  auto zero = cube_decompose(StateField(g), part);
  CHECK(zero.alpha_sum() == 0.0);

  StateField b = StateField::sample(g, [](const Vec& x) { return cplx(std::pow(1.0 + x[0] * x[0], -2.0)); });
  auto d = cube_decompose(b, part);
  CHECK(max_abs(d.reconstruct() - b) < 1e-12);
  for (std::size_t q = 0; q < d.phi.size(); ++q) {
    if (d.alpha[q] == 0.0) continue;
    StateField phi(g);
    for (std::size_t k = 0; k < d.support[q].size(); ++k) phi[d.support[q][k]] = d.phi[q][k];
    CHECK(fd_cn_norm(phi, d.support[q], 4) <= 1.0 + 1e-9);
  }
  // a field living in a single cube is carried by the cubes touching it
  StateField one(g);
  const Cube& c = part.cubes()[4];
  for (auto i : c.points) one[i] = 1.0;
  auto d1 = cube_decompose(one, part);
  int active = 0;
  for (double a : d1.alpha) active += a > 0.0;
  CHECK(active <= 3);
}

TEST_CASE("cube sup weights dominate the field") {
  Grid g(2, 6.0, 64);
  CubePartition part(g, 1.0);
  StateField f = StateField::sample(g, [](const Vec& x) { return cplx(std::exp(-dot(x, x) / 3.0), 0.2 * x[1]); });
  auto w = cube_sup_weights(f, part);
  REQUIRE(w.size() == part.cubes().size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec x = g.point(i);
    double bound = 0.0;
    for (std::size_t q = 0; q < w.size(); ++q) {
      Vec d = x - part.cubes()[q].center;
      bound += w[q] / (1.0 + dot(d, d));
    }
    CHECK(std::abs(f[i]) <= bound);
  }
}

TEST_CASE("W^{1,M} checks") {
  Grid g(1, 8.0, 128);
  ZRule quad = [](const Vec&, double, const ZVec& z) { return z[z_u] * z[z_ubar]; };
  ZRule lin = [](const Vec&, double, const ZVec& z) { return z[z_u]; };
  CHECK(rule_vanishes_to_second_order(quad, 1));
  CHECK_FALSE(rule_vanishes_to_second_order(lin, 1));
  CHECK(w1m_check(quad, StateField(g), 2) == 0.0);
  CHECK_THROWS_AS(w1m_check(lin, StateField(g), 2), ConfigError);

  // |u|^2 for a gaussian: L^1 norm in closed form
  StateField u = StateField::sample(g, [](const Vec& x) { return cplx(std::exp(-x[0] * x[0] / 2.0)); });
  double m0 = w1m_check(quad, u, 0);
  CHECK(m0 == doctest::Approx(std::sqrt(pi)).epsilon(1e-10));
  CHECK(w1m_check(quad, u, 2) > m0);
  // quadratic rule scales like lambda^2
  CHECK(w1m_check(quad, cplx(0.5) * u, 2) == doctest::Approx(0.25 * w1m_check(quad, u, 2)).epsilon(1e-12));
}
