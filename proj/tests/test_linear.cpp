#include <doctest.h>

#include "qls/doi.hpp"
#include "qls/linear.hpp"

using namespace qls;

namespace {
LinearSystem bump_system(const Grid& g, double eps) {
  auto cs = make_coefficients("bump-metric", g.dim(), json{{"amplitude", 0.3}, {"radius", 3.0}});
  return LinearSystem(freeze_at_state(cs, StateField(g), 0.0), eps);
}

StateField rk4(const LinearSystem& sys, StateField u, double T, double dt) {
  int n = static_cast<int>(std::lround(T / dt));
  for (int s = 0; s < n; ++s) {
    double t = s * dt;
    StateField k1 = linear_rhs(sys, u, t);
    StateField k2 = linear_rhs(sys, u + cplx(0.5 * dt) * k1, t + 0.5 * dt);
    StateField k3 = linear_rhs(sys, u + cplx(0.5 * dt) * k2, t + 0.5 * dt);
    StateField k4 = linear_rhs(sys, u + cplx(dt) * k3, t + dt);
    u += cplx(dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return u;
}
}  // namespace

TEST_CASE("free evolution of plane waves") {
  Grid g(1, 8.0, 64);
  StateField e = StateField::plane_wave(g, 5);
  double k = 5 * g.frequency_step();
  auto tr = evolve(free_system(g, 0.0), e, 0.5, 1e-2, 50);
  CHECK(max_abs(tr.frames().back() - std::exp(cplx(0.0, -k * k * 0.5)) * e) < 1e-12);
  auto damped = evolve(free_system(g, 1e-2), e, 0.5, 1e-2, 50);
  CHECK(l2_norm(damped.frames().back()) / l2_norm(e) == doctest::Approx(std::exp(-1e-2 * std::pow(k, 4) * 0.5)).epsilon(1e-12));
  CHECK(tr.size() == 2u);
}

TEST_CASE("splitting is second order on a bump metric") {
  Grid g(1, 16.0, 128);
  LinearSystem sys = bump_system(g, 0.0);
  StateField u0 = wave_packet(g, Vec{-3.0, 0.0}, Vec{8 * g.frequency_step(), 0.0}, 1.5);
  double T = 0.5;
  StateField ref = evolve(sys, u0, T, 1.25e-4, 4000).frames().back();
  std::vector<double> err;
  for (double dt : {4e-3, 2e-3, 1e-3}) {
    int n = static_cast<int>(std::lround(T / dt));
    err.push_back(l2_norm(evolve(sys, u0, T, dt, n).frames().back() - ref));
  }
  CHECK(std::log2(err[0] / err[1]) > 1.9);
  CHECK(std::log2(err[1] / err[2]) > 1.9);
  // an independent RK4 on the full right-hand side agrees
  StateField rk = rk4(sys, u0, 0.1, 2e-5);
  StateField sp = evolve(sys, u0, 0.1, 1e-4, 1000).frames().back();
  CHECK(l2_norm(rk - sp) / l2_norm(u0) < 1e-6);
}

TEST_CASE("divergence form conserves mass") {
  Grid g(2, 8.0, 64);
  LinearSystem sys = bump_system(g, 0.0);
  StateField u0 = wave_packet(g, Vec{-2.0, 1.0}, Vec{4 * g.frequency_step(), 0.0}, 1.0);
  auto tr = evolve(sys, u0, 0.5, 2e-3, 50);
  for (const auto& f : tr.frames()) CHECK(std::abs(l2_norm(f) / l2_norm(u0) - 1.0) < 1e-6);
}

TEST_CASE("vector system matches the scalar equation") {
  Grid g(1, 8.0, 64);
  auto cs = make_coefficients("quadratic-b1", 1, json{{"amplitude", 0.2}});
  StateField base = wave_packet(g, Vec{}, Vec{2 * g.frequency_step(), 0.0}, 1.5);
  LinearSystem sys(freeze_at_state(cs, cplx(0.5) * base, 0.0), 1e-3);
  StateField u = StateField::random(g, 9);
  u = apply_multiplier(u, [](const Vec& k) { return cplx(std::exp(-0.1 * dot(k, k))); });
  FieldPair w = conjugate_pair(u);
  FieldPair out = build_vector_system(sys).apply(w);
  StateField expect = linear_rhs(sys, u, 0.0) - sys.forcing_at(0.0);
  CHECK(max_abs(out.u - expect) < 1e-10 * max_abs(expect));
  StateField conj_expect = expect.conj();
  CHECK(max_abs(out.v - conj_expect) < 1e-10 * max_abs(expect));

  FieldPair p{u, 2.0 * u};
  CHECK(l2_norm(p - p) == 0.0);
  CHECK(l2_norm(p + p) == doctest::Approx(2.0 * l2_norm(p)));
}

TEST_CASE("diagonalization and gauge") {
  Grid g(1, 8.0, 64);
  LinearSystem flat = free_system(g, 0.0);
  Diagonalization d = diagonalize(build_vector_system(flat), 4.0);
  CHECK(d.S_norm == 0.0);
  FieldPair w = conjugate_pair(StateField::random(g, 1));
  CHECK(l2_norm(d.lambda(w) - w) == 0.0);

  GaugeOperator id = gauge_operator(g, constant_symbol(1, 0.0), 4.0, 1.0);
  CHECK(l2_norm(id.apply(w) - w) < 1e-14);
  GaugeOperator q = gauge_operator(g, flat_escape_symbol(1, 1.0).symbol, 4.0, 0.5);
  auto rt = gauge_roundtrip(q, {StateField::random(g, 2), StateField::random(g, 3)});
  CHECK(rt.pass);
  CHECK(rt.value("max_residual") < 1e-10);

  CHECK(tilde_l_check(flat.frozen, 4.0, {8, 32}).value("deviation_k32") < 1e-12);
}

TEST_CASE("a priori report") {
  Grid g(1, 8.0, 64);
  CubePartition part(g, 1.0);
  auto tr = evolve(free_system(g, 1e-3), StateField(g), 0.2, 1e-2, 1);
  auto rep = apriori_report(tr, part, 0.2);
  CHECK(rep.lhs == 0.0);
  CHECK(rep.rhs_data == 0.0);
  StateField u0 = wave_packet(g, Vec{}, Vec{3 * g.frequency_step(), 0.0}, 1.0);
  auto tr2 = evolve(free_system(g, 0.0), u0, 0.2, 1e-2, 1);
  auto rep2 = apriori_report(tr2, part, 0.2);
  CHECK(rep2.sup_l2_sq == doctest::Approx(std::pow(l2_norm(u0), 2)).epsilon(1e-10));
  CHECK(rep2.lhs >= rep2.sup_l2_sq);
  CHECK(rep2.A > 0.0);
  CHECK(rep2.cube_smoothing_sq.size() == part.cubes().size());
}
