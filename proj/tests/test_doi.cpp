#include <doctest.h>

#include "qls/doi.hpp"

using namespace qls;

namespace {
MetricField radial(int dim, std::function<double(double)> g, std::function<double(double)> dg) {
  return radial_metric(dim, "test", std::move(g), std::move(dg));
}
}  // namespace

TEST_CASE("flat escape symbol") {
  auto r = flat_escape_symbol(2, 1.0);
  for (Vec x : {Vec{0.3, -1.0}, Vec{4.0, 2.0}})
    for (Vec xi : {Vec{3.0, 1.0}, Vec{-10.0, 4.0}}) CHECK(std::abs(r.symbol(x - 2.0 * x, xi) + r.symbol(x, xi)) < 1e-15);
  // on x . xi = 0 the bracket is exactly 2|xi|
  Symbol hr = poisson_bracket(flat_hamiltonian(2), r.symbol);
  CHECK(std::abs(hr(Vec{1.0, -3.0}, Vec{3.0, 1.0}) - 2.0 * std::sqrt(10.0)) < 1e-12);

  auto sample = default_doi_sample(1, 32.0, 1.0);
  auto id = flat_identity_check(flat_escape_symbol(1, 1.0), sample, 1.0);
  CHECK(id.pass);
  CHECK(id.value("max_abs_error") < 1e-10);
  CHECK(id.value("min_excess_over_weight") >= -1e-10);
  auto id2 = flat_identity_check(r, default_doi_sample(2, 8.0, 1.0, 1e4, 9, 9, 9), 1.0);
  CHECK(id2.value("max_rel_error") < 1e-10);
}

TEST_CASE("lower bound search") {
  auto sample = default_doi_sample(1, 32.0, 1.0);
  auto r = flat_escape_symbol(1, 1.0);
  Symbol h = flat_hamiltonian(1);
  auto lb = verify_lower_bound(h, r.symbol, sample, 2.0);
  CHECK(lb.pass);
  CHECK(lb.value("B_star") >= 0.9);
  CHECK_FALSE(verify_lower_bound(h, constant_symbol(1, 0.0), sample, 2.0).pass);
  CHECK_FALSE(verify_lower_bound(h, cplx(-1.0) * r.symbol, sample, 2.0).pass);
}

TEST_CASE("uncentered symbols") {
  auto sample = default_doi_sample(1, 32.0, 1.0);
  auto r = flat_escape_symbol(1, 1.0);
  Symbol h = flat_hamiltonian(1);
  auto p0 = uncentered_symbol(r, r, Vec{}, h, 5, sample);
  CHECK(p0.n_weight == 0.0);
  // centered: the two weights coincide, up to what the constant allowance buys
  CHECK(p0.report.value("C1") + p0.report.value("C2") <= 2.01);
  auto p8 = uncentered_symbol(r, r, Vec{8.0, 0.0}, h, 5, sample);
  CHECK(p8.report.value("C1") == doctest::Approx(2.0 * 0.95).epsilon(0.02));
  // adding more of the centered symbol never breaks the bound
  CHECK(verify_bump_bound(h, cplx(p8.n_weight + 2.0) * r.symbol + shifted(r.symbol, Vec{8.0, 0.0}), Vec{8.0, 0.0},
                          sample)
            .pass);

  Symbol hb = principal_symbol(compact_bump_metric(1, 0.1, 4.0));
  auto pb = uncentered_symbol(r, r, Vec{8.0, 0.0}, hb, 20, sample);
  CHECK(pb.report.value("C1") > 0.0);
  CHECK(pb.n_weight >= 0.0);
  // a center far outside the sample leaves no weight near the origin
  try {
    uncentered_symbol(r, r, Vec{30.0, 0.0}, h, 0, sample);
    CHECK(false);
  } catch (const ComputationError& e) {
    CHECK(std::string(e.what()).find("perturbation too large") != std::string::npos);
  }
  CHECK_THROWS_AS(uncentered_symbol(r, r, Vec{}, h, -1, sample), ConfigError);
}

TEST_CASE("time stability horizon") {
  auto sample = default_doi_sample(1, 16.0, 1.0, 1e3, 17, 17, 2);
  auto r = flat_escape_symbol(1, 1.0);
  MetricField base = compact_bump_metric(1, 0.1, 4.0);
  auto p = uncentered_symbol(r, r, Vec{}, principal_symbol(base), 10, sample);
  auto still = time_stability_horizon(base, p, sample, 0.5, 2.0);
  CHECK(still.value("T1") == 2.0);
  auto rho = [](double amp) {
    return time_modulated_metric(
        compact_bump_metric(1, 0.1, 4.0), [amp](const Vec& x) { return amp / (1.0 + dot(x, x)); },
        [amp](const Vec& x) {
          double b = 1.0 + dot(x, x);
          return Vec{-2.0 * amp * x[0] / (b * b), 0.0};
        });
  };
  double t1 = time_stability_horizon(rho(0.1), p, sample, 0.5, 100.0).value("T1");
  double t2 = time_stability_horizon(rho(0.2), p, sample, 0.5, 100.0).value("T1");
  CHECK(t1 > 0.0);
  CHECK(t1 / t2 == doctest::Approx(2.0).epsilon(0.01));
  CHECK(time_stability_horizon(rho(1e4), p, sample, 0.5, 100.0).value("T1") < 1e-3);
}

TEST_CASE("flatness and perturbation margin") {
  std::vector<Vec> xs;
  for (double x = -16.0; x <= 16.0; x += 0.5) xs.push_back(Vec{x, 0.0});
  auto fl = metric_flatness(gaussian_bump_metric(1, 0.3, 2.0), xs, true);
  CHECK(fl.pass);
  CHECK_FALSE(metric_flatness(radial(1, [](double) { return 0.5; }, [](double) { return 0.0; }), xs, false).pass);

  auto sample = default_doi_sample(1, 16.0, 1.0, 1e3, 17, 17, 2);
  auto r = flat_escape_symbol(1, 1.0);
  MetricField a0 = flat_metric(1);
  auto p = uncentered_symbol(r, r, Vec{}, principal_symbol(a0), 10, sample);
  auto zero = radial(1, [](double) { return 0.0; }, [](double) { return 0.0; });
  CHECK(perturbation_margin(a0, zero, p, sample, 0.5, 10.0).value("eta_max") == 10.0);
  auto decaying = radial(1, [](double s) { return 1.0 / (1.0 + s * s); },
                         [](double s) { return -2.0 * s / ((1.0 + s * s) * (1.0 + s * s)); });
  double eta = perturbation_margin(a0, decaying, p, sample, 0.5, 10.0).value("eta_max");
  CHECK(eta > 0.0);
  CHECK(eta < 10.0);
  auto constant = radial(1, [](double) { return 0.5; }, [](double) { return 0.0; });
  CHECK_THROWS_AS(perturbation_margin(a0, constant, p, sample, 0.5), ConfigError);
}

TEST_CASE("gamma assembly") {
  auto r = flat_escape_symbol(1, 1.0);
  Symbol s1 = shifted(r.symbol, Vec{3.0, 0.0});
  Symbol g = assemble_gamma(r.symbol, {{0.5, s1}, {1e-14, constant_symbol(1, 100.0)}});
  Vec x{1.0, 0.0}, xi{5.0, 0.0};
  CHECK(std::abs(g(x, xi) - (r.symbol(x, xi) + 0.5 * s1(x, xi))) < 1e-15);
}
