// Serial kernels against their OpenMP twins on the Kohn-Nirenberg sum and
// the per-point sweep used by the estimate checks.
#include <benchmark/benchmark.h>

#include <vector>

#include "qls/doi.hpp"
#include "qls/hamiltonian.hpp"
#include "qls/kernels.hpp"

using namespace qls;

namespace {

Symbol bench_symbol() {
  Symbol a = multiplication_symbol(1, [](const Vec& x, double) { return cplx(1.0 + 0.3 * std::exp(-x[0] * x[0])); },
                                   nullptr, "a");
  return a * japanese_bracket_xi(1, 1.0);
}

void BM_tabulate(benchmark::State& st, bool omp) {
  Grid g(1, 16.0, static_cast<int>(st.range(0)));
  Symbol q = bench_symbol();
  std::vector<cplx> table(g.size() * g.size());
  for (auto _ : st) {
    if (omp) {
      kernels::kn_tabulate_omp(q, g, 0.0, table);
    } else {
      kernels::kn_tabulate_serial(q, g, 0.0, table);
    }
    benchmark::DoNotOptimize(table.data());
  }
}

void BM_matvec(benchmark::State& st, bool omp) {
  Grid g(1, 16.0, static_cast<int>(st.range(0)));
  std::vector<cplx> table(g.size() * g.size());
  kernels::kn_tabulate_serial(bench_symbol(), g, 0.0, table);
  std::vector<cplx> c(g.size(), cplx(1.0, 0.5)), out(g.size());
  for (auto _ : st) {
    if (omp) {
      kernels::kn_matvec_omp(table, c, out);
    } else {
      kernels::kn_matvec_serial(table, c, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_direct(benchmark::State& st, bool omp) {
  Grid g(1, 16.0, static_cast<int>(st.range(0)));
  Symbol q = bench_symbol();
  std::vector<cplx> c(g.size(), cplx(1.0, 0.5)), out(g.size());
  for (auto _ : st) {
    if (omp) {
      kernels::kn_direct_omp(q, g, 0.0, c, out);
    } else {
      kernels::kn_direct_serial(q, g, 0.0, c, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

// Ray sweep: one trapped-metric ray per entry.
void BM_sweep(benchmark::State& st, bool omp) {
  MetricField a = circular_trap_metric(2);
  std::vector<double> out(static_cast<std::size_t>(st.range(0)));
  auto f = [&](std::size_t i) {
    double th = 0.1 * static_cast<double>(i);
    auto path = integrate_ray(a, Vec{2.0 * std::cos(th), 2.0 * std::sin(th)}, Vec{0.0, 1.0}, 1e-2, 5.0);
    return path.back().X[0];
  };
  for (auto _ : st) {
    if (omp) {
      kernels::sweep_omp(f, out);
    } else {
      kernels::sweep_serial(f, out);
    }
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK_CAPTURE(BM_tabulate, serial, false)->Arg(128)->Arg(512);
BENCHMARK_CAPTURE(BM_tabulate, openmp, true)->Arg(128)->Arg(512);
BENCHMARK_CAPTURE(BM_matvec, serial, false)->Arg(128)->Arg(512);
BENCHMARK_CAPTURE(BM_matvec, openmp, true)->Arg(128)->Arg(512);
BENCHMARK_CAPTURE(BM_direct, serial, false)->Arg(128)->Arg(512);
BENCHMARK_CAPTURE(BM_direct, openmp, true)->Arg(128)->Arg(512);
BENCHMARK_CAPTURE(BM_sweep, serial, false)->Arg(16);
BENCHMARK_CAPTURE(BM_sweep, openmp, true)->Arg(16);

BENCHMARK_MAIN();
