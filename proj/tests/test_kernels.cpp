#include <doctest.h>

#include <vector>

#include "qls/kernels.hpp"

using namespace qls;

// Every OpenMP kernel against its serial twin.

namespace {
Symbol mixed_symbol(int dim) {
  return Symbol(dim, 1.0,
                [](const Vec& x, const Vec& xi, double t) {
                  return cplx(1.0 + 0.2 * std::sin(x[0] + t), 0.1 * x[1]) * std::sqrt(1.0 + dot(xi, xi));
                },
                "mixed");
}
}  // namespace

TEST_CASE("tabulate and matvec twins") {
  for (int dim : {1, 2}) {
    Grid g(dim, 4.0, dim == 1 ? 64 : 8);
    std::size_t M = g.size();
    std::vector<cplx> ts(M * M), to(M * M);
    kernels::kn_tabulate_serial(mixed_symbol(dim), g, 0.3, ts);
    kernels::kn_tabulate_omp(mixed_symbol(dim), g, 0.3, to);
    CHECK(ts == to);
    std::size_t j = 5 % M, m = 3;
    cplx expect = mixed_symbol(dim)(g.point(j), g.frequency(m), 0.3) * std::exp(cplx(0.0, dot(g.frequency(m), g.point(j))));
    CHECK(std::abs(ts[j * M + m] - expect) < 1e-13);

    StateField c = StateField::random(g, 8);
    std::vector<cplx> os(M), oo(M), ds(M), dd(M);
    kernels::kn_matvec_serial(ts, c.values(), os);
    kernels::kn_matvec_omp(ts, c.values(), oo);
    kernels::kn_direct_serial(mixed_symbol(dim), g, 0.3, c.values(), ds);
    kernels::kn_direct_omp(mixed_symbol(dim), g, 0.3, c.values(), dd);
    for (std::size_t i = 0; i < M; ++i) {
      CHECK(std::abs(os[i] - oo[i]) < 1e-12);
      CHECK(std::abs(os[i] - ds[i]) < 1e-12);
      CHECK(std::abs(ds[i] - dd[i]) < 1e-12);
    }
  }
}

TEST_CASE("sweep twins") {
  std::vector<double> a(1000), b(1000);
  auto f = [](std::size_t i) { return std::sin(0.01 * static_cast<double>(i)); };
  kernels::sweep_serial(f, a);
  kernels::sweep_omp(f, b);
  CHECK(a == b);
  kernels::sweep(Backend::openmp, f, b);
  CHECK(a == b);
}

TEST_CASE("backend switches") {
  Backend old = default_backend();
  set_default_backend(Backend::serial);
  CHECK(default_backend() == Backend::serial);
  set_default_backend(old);
  set_threads(2);
  CHECK(max_threads() >= 1);
  set_threads(0);
}
