#include <doctest.h>

#include <sstream>

#include "qls/grid.hpp"
#include "qls/hamiltonian.hpp"

using namespace qls;

TEST_CASE("flat rays are straight lines") {
  auto path = integrate_ray(flat_metric(2), Vec{1.0, -2.0}, Vec{0.5, 1.5}, 1e-2, 3.0);
  REQUIRE(path.size() == 301u);
  for (const auto& st : path) {
    CHECK(norm(st.X - (Vec{1.0, -2.0} + (2.0 * st.s) * Vec{0.5, 1.5})) < 1e-12);
    CHECK(norm(st.Xi - Vec{0.5, 1.5}) == 0.0);
  }
  auto back = integrate_ray(flat_metric(1), Vec{0.0, 0.0}, Vec{1.0, 0.0}, -1e-2, 1.0);
  CHECK(back.back().X[0] == doctest::Approx(-2.0));
  CHECK_THROWS_AS(integrate_ray(flat_metric(1), Vec{}, Vec{1.0, 0.0}, 0.0, 1.0), ConfigError);
}

TEST_CASE("h is conserved along rays") {
  for (const auto& a : {gaussian_bump_metric(2, 0.5, 1.0), compact_bump_metric(2, 0.1, 4.0), circular_trap_metric(2)}) {
    for (Vec x0 : {Vec{0.0, 0.0}, Vec{-2.0, 0.7}, Vec{2.98, 0.0}}) {
      auto path = integrate_ray(a, x0, Vec{0.3, 1.0}, 1e-3, 10.0);
      CHECK(relative_h_drift(a, path) < 1e-8);
    }
  }
}

TEST_CASE("bent ray through a bump against a half-step reference") {
  MetricField a = gaussian_bump_metric(2, 0.5, 1.0);
  Vec x0{-3.0, 0.2}, xi0{1.0, 0.0};
  auto coarse = integrate_ray(a, x0, xi0, 1e-2, 3.0);
  auto fine = integrate_ray(a, x0, xi0, 5e-3, 3.0);
  CHECK(norm(coarse.back().X - fine.back().X) < 1e-6);
  CHECK(norm(coarse.back().Xi - fine.back().Xi) < 1e-6);
  // the bump deflects the ray away from the axis it started on
  CHECK(std::abs(coarse.back().Xi[1]) > 1e-3);
}

TEST_CASE("ellipticity keeps |Xi| within the metric's range") {
  MetricField a = gaussian_bump_metric(2, -0.4, 1.5);  // values in [0.6, 1]
  auto path = integrate_ray(a, Vec{-4.0, 0.3}, Vec{1.0, 0.5}, 1e-2, 10.0);
  double n0 = 1.25, C2 = 1.0 / 0.6;
  for (const auto& st : path) {
    double n = dot(st.Xi, st.Xi);
    CHECK(n >= n0 / C2 * (1 - 1e-9));
    CHECK(n <= n0 * C2 * (1 + 1e-9));
  }
}

TEST_CASE("classification") {
  auto sample = default_ray_sample(2, 4.0, 4, 8);
  // one (x0, xi0) pair per ray
  CHECK(sample.x0.size() == 128u);
  CHECK(sample.xi0.size() == 128u);
  auto flat = classify_nontrapping(flat_metric(2), sample, 12.0, 20.0);
  CHECK(flat.nontrapping_on_sample);
  CHECK(flat.rays.size() == 128u);
  // straight radial ray from the origin: |X| = 2 s
  auto radial = classify_nontrapping(flat_metric(1), RaySample{{Vec{}}, {Vec{1.0, 0.0}}}, 10.0, 20.0, 1e-2);
  CHECK(radial.rays[0].exit_forward == doctest::Approx(5.0).epsilon(2e-3));
  CHECK(radial.rays[0].exit_backward == doctest::Approx(5.0).epsilon(2e-3));

  auto bump = classify_nontrapping(compact_bump_metric(2, 0.1, 4.0), sample, 12.0, 20.0);
  CHECK(bump.nontrapping_on_sample);

  auto trap = classify_nontrapping(circular_trap_metric(2), RaySample{{Vec{2.98, 0.0}}, {Vec{0.0, 1.0}}}, 12.0, 50.0);
  CHECK_FALSE(trap.nontrapping_on_sample);
  CHECK(trap.rays[0].status == RayStatus::undetermined);
  CHECK(trap.rays[0].max_radius < 4.0);

  // the parallel classifier stores rays by index and matches the serial one
  auto a = classify_nontrapping(circular_trap_metric(2), sample, 12.0, 20.0);
  auto b = classify_nontrapping_serial(circular_trap_metric(2), sample, 12.0, 20.0);
  REQUIRE(a.rays.size() == b.rays.size());
  for (std::size_t i = 0; i < a.rays.size(); ++i) {
    CHECK(a.rays[i].status == b.rays[i].status);
    CHECK(a.rays[i].exit_forward == b.rays[i].exit_forward);
    CHECK(a.rays[i].max_radius == b.rays[i].max_radius);
  }
  CHECK(a.worst_ray == b.worst_ray);

  std::ostringstream os;
  write_rays_csv(os, radial);
  std::string csv = os.str();
  CHECK(csv.rfind("id,x0_0,x0_1,xi0_0,xi0_1,escaped_fwd", 0) == 0);
  CHECK(csv.find(",escaped\n") != std::string::npos);
}

TEST_CASE("principal symbol and metric helpers") {
  MetricField a = gaussian_bump_metric(2, 0.5, 1.0);
  Symbol h = principal_symbol(a);
  Vec x{0.3, -0.4}, xi{2.0, 1.0};
  CHECK(std::abs(h(x, xi) - hamiltonian_value(a, x, xi)) < 1e-14);
  CHECK(std::abs(h(x, xi) - (1.0 + 0.5 * std::exp(-0.25)) * 5.0) < 1e-12);
  auto g = a.gradient(x, 0.0);
  double e = 1e-6;
  double fd = (a(Vec{x[0] + e, x[1]})(0, 0) - a(Vec{x[0] - e, x[1]})(0, 0)) / (2 * e);
  CHECK(g[0](0, 0) == doctest::Approx(fd).epsilon(1e-6));

  // sampled metric reproduces an analytic one on and between grid points
  Grid grid(1, 8.0, 128);
  std::vector<double> a00(grid.size()), zero(grid.size());
  MetricField exact = gaussian_bump_metric(1, 0.3, 2.0);
  for (std::size_t i = 0; i < grid.size(); ++i) a00[i] = exact(grid.point(i))(0, 0);
  MetricField s = sampled_metric(grid, a00, zero, zero, "sampled");
  for (double xv : {0.0, 0.77, -1.31}) {
    CHECK(s(Vec{xv, 0.0})(0, 0) == doctest::Approx(exact(Vec{xv, 0.0})(0, 0)).epsilon(1e-5));
    CHECK(s.gradient(Vec{xv, 0.0}, 0.0)[0](0, 0) ==
          doctest::Approx(exact.gradient(Vec{xv, 0.0}, 0.0)[0](0, 0)).epsilon(1e-3));
  }
}
