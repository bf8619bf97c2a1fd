#include <doctest.h>

#include "qls/linear.hpp"
#include "qls/psido.hpp"

using namespace qls;

namespace {
StateField smooth_random(const Grid& g, unsigned seed) {
  return apply_multiplier(StateField::random(g, seed), [](const Vec& k) { return cplx(std::exp(-0.2 * dot(k, k))); });
}
}  // namespace

TEST_CASE("kind detection") {
  Grid g(1, 8.0, 32);
  CHECK(detect_kind(constant_symbol(1, 2.0), g) == OperatorKind::multiplier);
  CHECK(detect_kind(japanese_bracket_xi(1, 1.0), g) == OperatorKind::multiplier);
  Symbol a = multiplication_symbol(1, [](const Vec& x, double) { return cplx(std::cos(x[0])); }, nullptr, "a");
  CHECK(detect_kind(a, g) == OperatorKind::multiplication);
  CHECK(detect_kind(a * japanese_bracket_xi(1, 1.0), g) == OperatorKind::general);
  CHECK(std::string(to_string(OperatorKind::general)) == "general");
}

TEST_CASE("quantization of simple symbols") {
  Grid g(1, 8.0, 64);
  StateField f = smooth_random(g, 4);
  QuantizedOperator id(constant_symbol(1, 1.0), g);
  CHECK(max_abs(id.apply(f) - f) < 1e-14);

  Symbol a = multiplication_symbol(1, [](const Vec& x, double) { return cplx(1.0 + 0.3 * std::sin(x[0]), 0.2); }, nullptr, "a");
  StateField af = QuantizedOperator(a, g).apply(f);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(af[i] - a(g.point(i), Vec{}) * f[i]) < 1e-14);

  StateField e = StateField::plane_wave(g, 7);
  double k = 7 * g.frequency_step();
  StateField je = QuantizedOperator(japanese_bracket_xi(1, 1.0), g).apply(e);
  CHECK(max_abs(je - cplx(std::sqrt(1 + k * k)) * e) < 1e-12);

  // the general path against the fast paths, serial and OpenMP
  for (const Symbol& q : {a, japanese_bracket_xi(1, 1.0)}) {
    QuantizedOperator fast(q, g), slow(q, g, OperatorKind::general);
    CHECK(max_abs(fast.apply(f) - slow.apply(f, 0.0, Backend::serial)) < 1e-10 * max_abs(fast.apply(f)));
    CHECK(max_abs(slow.apply(f, 0.0, Backend::serial) - slow.apply(f, 0.0, Backend::openmp)) < 1e-13);
  }
  // a genuinely mixed symbol: x-dependence times a multiplier equals the
  // product of the two fast paths in that order
  Symbol mixed = a * japanese_bracket_xi(1, 1.0);
  StateField lhs = QuantizedOperator(mixed, g).apply(f);
  StateField rhs = QuantizedOperator(a, g).apply(QuantizedOperator(japanese_bracket_xi(1, 1.0), g).apply(f));
  CHECK(max_abs(lhs - rhs) < 1e-11 * max_abs(rhs));

  QuantizedOperator other(a, Grid(1, 8.0, 32));
  CHECK_THROWS_AS(other.apply(f), ConfigError);
}

TEST_CASE("Neumann series") {
  Grid g(1, 8.0, 32);
  StateField f = smooth_random(g, 1);
  auto zero = [&](const StateField& v) { return StateField(v.grid()); };
  CHECK(max_abs(neumann_inverse_apply(zero, f, 1e-14, 50) - f) == 0.0);
  auto half = [](const StateField& v) { return cplx(0.5) * v; };
  CHECK(max_abs(neumann_inverse_apply(half, f, 1e-14, 100) - cplx(2.0) * f) < 1e-12 * max_abs(f));
  auto grow = [](const StateField& v) { return cplx(1.5) * v; };
  CHECK_THROWS_AS(neumann_inverse_apply(grow, f, 1e-14, 100), ComputationError);

  // S built from a test b2 with R = 10
  Grid g2(1, 16.0, 128);
  LinearSystem sys = free_system(g2, 0.0);
  for (std::size_t i = 0; i < g2.size(); ++i) sys.frozen.b2[0][i] = cplx(0.4 * std::exp(-g2.point(i)[0] * g2.point(i)[0] / 8.0), 0.1);
  Diagonalization d = diagonalize(build_vector_system(sys), 10.0);
  FieldPair rhs{smooth_random(g2, 2), smooth_random(g2, 3)};
  FieldPair w = d.lambda_inverse(rhs);
  CHECK(l2_norm(d.lambda(w) - rhs) / l2_norm(rhs) < 1e-8);
}

TEST_CASE("operator norm estimate") {
  Grid g(1, 8.0, 64);
  auto S = [](const StateField& v) {
    return apply_multiplier(v, [](const Vec& k) { return cplx(0.7 / (1.0 + dot(k, k))); });
  };
  double n = estimate_operator_norm(S, g, 5, 60);
  CHECK(n <= 0.7 + 1e-12);
  CHECK(n > 0.69);
}

TEST_CASE("Garding check") {
  Grid g(1, 16.0, 128);
  std::vector<StateField> trials;
  for (unsigned s = 1; s <= 4; ++s) trials.push_back(StateField::random(g, s));
  for (int m : {2, 20, 50}) trials.push_back(wave_packet(g, Vec{}, Vec{m * g.frequency_step(), 0.0}, 2.0));
  auto pos = garding_check(flat_hamiltonian(1) * cutoff_theta(1, 2.0), trials);
  CHECK(pos.pass);
  CHECK(pos.value("fitted_C") < 1e-10);
  auto one = garding_check(constant_symbol(1, 1.0), trials);
  CHECK(one.pass);
  CHECK(one.value("min_ratio") == doctest::Approx(1.0));
  Symbol neg = cplx(-1.0) * japanese_bracket_xi(1, 1.0) * cutoff_theta(1, 2.0);
  CHECK_FALSE(garding_check(neg, trials, 1.0).pass);
}

TEST_CASE("composition remainder and triple norms") {
  Grid g(1, 32.0, 512);
  Symbol a = multiplication_symbol(1, [](const Vec& x, double) { return cplx(std::exp(-x[0] * x[0] / 4.0)); }, nullptr, "a");
  auto r = composition_remainder(a, japanese_bracket_xi(1, 1.0), g, {4, 8, 16, 32, 64});
  CHECK(r.pass);
  // an order-two multiplier leaves an order-one commutator
  auto r2 = composition_remainder(a, flat_hamiltonian(1), g, {4, 8, 16, 32, 64});
  CHECK(r2.value("growth_exponent") > 0.5);

  Grid gs(1, 8.0, 64);
  CubePartition part(gs, 1.0);
  Trajectory tr(0.1);
  for (int n = 0; n < 4; ++n) {
    StateField f = smooth_random(gs, 10 + n);
    f.set_time(0.1 * n);
    tr.push(f);
  }
  auto tb = triple_norm_bound(QuantizedOperator(cutoff_theta(1, 1.0), gs), {tr}, part, 0.3);
  CHECK(tb.pass);
  CHECK(tb.value("max_ratio") < 10.0);
}
