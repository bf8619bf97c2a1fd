#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <sstream>

#include "qls/grid.hpp"

using namespace qls;

TEST_CASE("grid layout") {
  Grid g(1, 4.0, 16);
  CHECK(g.spacing() == doctest::Approx(0.5));
  CHECK(g.point(0)[0] == doctest::Approx(-4.0));
  CHECK(g.point(15)[0] == doctest::Approx(3.5));
  CHECK(g.frequency_step() == doctest::Approx(pi / 4.0));
  CHECK(g.mode_index(7) == 7);
  CHECK(g.mode_index(8) == -8);
  CHECK(g.is_nyquist(8));
  CHECK(g.index_of_mode(-3) == 13u);
  Grid g2(2, 4.0, 8);
  CHECK(g2.size() == 64u);
  CHECK(g2.unflat(g2.flat(3, 5)) == std::array<int, 2>{3, 5});
  CHECK(g2.box_volume() == doctest::Approx(64.0));
  CHECK_THROWS_AS(Grid(3, 1.0, 8), ConfigError);
  CHECK_THROWS_AS(Grid(1, 1.0, 12), ConfigError);
  CHECK_THROWS_AS(Grid(1, -1.0, 8), ConfigError);
}

TEST_CASE("transform of zero and of a lattice exponential") {
  Grid g(1, 8.0, 32);
  Spectrum z = forward_transform(StateField(g));
  for (auto c : z.coeffs()) CHECK(std::abs(c) == 0.0);
  for (int m : {0, 3, -5, -16}) {
    Spectrum c = forward_transform(StateField::plane_wave(g, m));
    for (std::size_t i = 0; i < g.size(); ++i) {
      double expect = i == g.index_of_mode(m) ? 1.0 : 0.0;
      CHECK(std::abs(c[i] - expect) < 1e-13);
    }
  }
  Grid g2(2, 8.0, 16);
  Spectrum c2 = forward_transform(StateField::plane_wave(g2, 2, -3));
  CHECK(std::abs(c2[g2.index_of_mode(2, -3)] - 1.0) < 1e-13);
}

TEST_CASE("round trip and Parseval on random fields") {
  for (int dim : {1, 2}) {
    Grid g(dim, 5.0, dim == 1 ? 128 : 32);
    StateField f = StateField::random(g, 11);
    StateField back = inverse_transform(forward_transform(f));
    CHECK(max_abs(back - f) < 1e-12);
    Spectrum c = forward_transform(f);
    double s = 0.0;
    for (auto v : c.coeffs()) s += std::norm(v);
    double n2 = l2_norm(f) * l2_norm(f);
    CHECK(std::abs(n2 - s * c.norm_weight()) / n2 < 1e-12);
  }
  Grid g(1, 5.0, 64);
  StateField f(g);
  f[0] = 1.0;
  StateField wrong(Grid(1, 5.0, 32));
  CHECK_THROWS_AS(f += wrong, ConfigError);
  CHECK_THROWS_AS(Spectrum(g, std::vector<cplx>(3)), ConfigError);
}

TEST_CASE("sobolev norms") {
  Grid g(1, 8.0, 64);
  CHECK(sobolev_norm(StateField(g), 1.5) == 0.0);
  StateField e = StateField::plane_wave(g, 5);
  double k = 5 * g.frequency_step();
  for (double s : {-1.0, 0.0, 2.0, 3.5})
    CHECK(sobolev_norm(e, s) == doctest::Approx(std::pow(1.0 + k * k, s / 2.0) * std::sqrt(16.0)).epsilon(1e-12));
  StateField f = StateField::random(g, 2);
  double direct = 0.0;
  for (auto v : f.values()) direct += std::norm(v) * g.spacing();
  CHECK(std::abs(sobolev_norm(f, 0.0) - std::sqrt(direct)) / std::sqrt(direct) < 1e-12);
  double prev = 0.0;
  for (double s = -2.0; s <= 4.0; s += 0.5) {
    double n = sobolev_norm(f, s);
    CHECK(n >= prev);
    prev = n;
  }
  // interpolation between L^2 and H^s
  for (unsigned seed = 1; seed < 5; ++seed) {
    StateField r = StateField::random(g, seed);
    for (double s : {2.0, 4.0})
      CHECK(sobolev_norm(r, s - 1.0) <=
            std::pow(l2_norm(r), 1.0 / s) * std::pow(sobolev_norm(r, s), (s - 1.0) / s) * (1 + 1e-12));
  }
  StateField bad(g);
  bad[3] = cplx(std::nan(""), 0.0);
  CHECK_THROWS_AS(sobolev_norm(bad, 1.0), ComputationError);
}

TEST_CASE("spectral derivatives") {
  Grid g(1, pi, 32);
  StateField f = StateField::sample(g, [](const Vec& x) { return cplx(std::sin(3 * x[0]), 0.0); });
  StateField df = partial(f, 0);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(df[i] - 3.0 * std::cos(3 * g.point(i)[0])) < 1e-12);
  StateField lap = laplacian(f);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(lap[i] + 9.0 * f[i]) < 1e-11);
  // the Nyquist mode is removed by odd derivatives
  StateField ny = StateField::plane_wave(g, -16);
  CHECK(max_abs(partial(ny, 0)) < 1e-12);
  Grid g2(2, pi, 16);
  StateField h = StateField::sample(g2, [](const Vec& x) { return cplx(std::cos(x[0]) * std::sin(2 * x[1]), 0.0); });
  StateField mixed = second_partial(h, 0, 1);
  for (std::size_t i = 0; i < g2.size(); ++i) {
    Vec x = g2.point(i);
    CHECK(std::abs(mixed[i] + 2.0 * std::sin(x[0]) * std::cos(2 * x[1])) < 1e-11);
  }
  StateField j = bessel_potential(StateField::plane_wave(g, 4), 2.0);
  CHECK(std::abs(j[0] / StateField::plane_wave(g, 4)[0] - 17.0) < 1e-12);
}

TEST_CASE("cubes and triple norms") {
  Grid g(1, 4.0, 32);
  CubePartition part(g, 1.0);
  CHECK(part.cubes().size() == 8u);
  std::size_t total = 0;
  for (const auto& c : part.cubes()) total += c.points.size();
  CHECK(total == g.size());
  CHECK(part.cube_of(0) == part.locate(Vec{-3.9, 0.0}));

  Trajectory zero(0.1);
  for (int n = 0; n < 5; ++n) zero.push(StateField(g, 0.1 * n));
  CHECK(triple_norm_sup(zero, part, 0.4) == 0.0);
  CHECK(triple_norm_sum(zero, part, 0.4) == 0.0);

  // supported in one cube: sup = sum
  const Cube& c3 = part.cubes()[3];
  Trajectory one(0.1);
  for (int n = 0; n < 5; ++n) {
    StateField f(g, 0.1 * n);
    for (auto i : c3.points) f[i] = 1.0 + 0.5 * n;
    one.push(f);
  }
  double s = triple_norm_sup(one, part, 0.4);
  CHECK(s == doctest::Approx(triple_norm_sum(one, part, 0.4)));
  // direct quadrature of |1 + 5t|^2 over [0, 0.4] by the trapezoid rule, times |Q| = 1
  double direct = 0.0;
  for (int n = 0; n < 4; ++n) direct += 0.05 * (std::pow(1.0 + 0.5 * n, 2) + std::pow(1.0 + 0.5 * (n + 1), 2));
  CHECK(s * s == doctest::Approx(direct));

  Trajectory rnd(0.1);
  for (int n = 0; n < 5; ++n) rnd.push(StateField::random(g, 3 + n, 0.1 * n));
  auto per = cube_space_time_norms(rnd, part, 0.4);
  for (std::size_t q = 0; q < per.size(); ++q) {
    std::vector<double> samples;
    for (const auto& f : rnd.frames()) {
      double acc = 0.0;
      for (auto i : part.cubes()[q].points) acc += std::norm(f[i]) * g.spacing();
      samples.push_back(acc);
    }
    CHECK(per[q] == doctest::Approx(std::sqrt(trapezoid_to(samples, 0.1, 0.4))));
  }
  CHECK(triple_norm_sup(rnd, part, 0.4) <= triple_norm_sum(rnd, part, 0.4));
  CHECK_THROWS_AS(triple_norm_sup(Trajectory(0.1), part, 0.1), ConfigError);
  CHECK_THROWS_AS(triple_norm_sup(rnd, part, 1.0), ConfigError);
  Trajectory bad(0.1);
  bad.push(StateField(g, 0.0));
  CHECK_THROWS_AS(bad.push(StateField(g, 0.3)), ConfigError);
}

TEST_CASE("binary field records") {
  Grid g(2, 3.0, 8);
  StateField f = StateField::random(g, 5);
  std::stringstream ss;
  write_field(ss, f);
  std::string bytes = ss.str();
  REQUIRE(bytes.size() == 4 + 4 + 8 + 64 * 16);
  std::uint32_t dim, n;
  double L, re0;
  std::memcpy(&dim, bytes.data(), 4);
  std::memcpy(&n, bytes.data() + 4, 4);
  std::memcpy(&L, bytes.data() + 8, 8);
  std::memcpy(&re0, bytes.data() + 16, 8);
  CHECK(dim == 2u);
  CHECK(n == 8u);
  CHECK(L == 3.0);
  CHECK(re0 == f[0].real());
  StateField back = read_field(ss);
  CHECK(back.grid() == g);
  CHECK(max_abs(back - f) == 0.0);

  auto path = (std::filesystem::temp_directory_path() / "qls_test_fields.bin").string();
  write_fields(path, {f, 2.0 * f});
  auto frames = read_fields(path);
  REQUIRE(frames.size() == 2u);
  CHECK(max_abs(frames[1] - 2.0 * f) == 0.0);
  std::remove(path.c_str());

  std::stringstream trunc(bytes.substr(0, 20));
  CHECK_THROWS_AS(read_field(trunc), ConfigError);
}
