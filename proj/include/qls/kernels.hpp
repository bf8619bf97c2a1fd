#pragma once

// Data-parallel kernels. Every OpenMP kernel has a serial twin used as the
// test reference and as the benchmark baseline.

#include <cstddef>
#include <functional>
#include <span>

#include "qls/grid.hpp"
#include "qls/symbols.hpp"

namespace qls {

enum class Backend { serial, openmp };

Backend default_backend() noexcept;
void set_default_backend(Backend b) noexcept;
// Sets the OpenMP team size; k <= 0 leaves the runtime default.
void set_threads(int k);
int max_threads();

namespace kernels {

// Kohn-Nirenberg table, row-major M x M with M = grid.size():
//   T[j*M + m] = q(x_j, k_m, t) * exp(i k_m . x_j)
void kn_tabulate_serial(const Symbol& q, const Grid& g, double t, std::span<cplx> table);
void kn_tabulate_omp(const Symbol& q, const Grid& g, double t, std::span<cplx> table);

// out_j = sum_m T[j*M + m] c_m
void kn_matvec_serial(std::span<const cplx> table, std::span<const cplx> c, std::span<cplx> out);
void kn_matvec_omp(std::span<const cplx> table, std::span<const cplx> c, std::span<cplx> out);

// Same sum without a table, evaluating q on the fly.
void kn_direct_serial(const Symbol& q, const Grid& g, double t, std::span<const cplx> c,
                      std::span<cplx> out);
void kn_direct_omp(const Symbol& q, const Grid& g, double t, std::span<const cplx> c,
                   std::span<cplx> out);

// out[i] = f(i) for i < out.size(); f must be re-entrant.
void sweep_serial(const std::function<double(std::size_t)>& f, std::span<double> out);
void sweep_omp(const std::function<double(std::size_t)>& f, std::span<double> out);

inline void sweep(Backend b, const std::function<double(std::size_t)>& f, std::span<double> out) {
  if (b == Backend::openmp) {
    sweep_omp(f, out);
  } else {
    sweep_serial(f, out);
  }
}

}  // namespace kernels
}  // namespace qls
