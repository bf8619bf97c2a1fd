#include "qls/kernels.hpp"

#include <omp.h>

#include <atomic>
#include <exception>

namespace qls {

namespace {
std::atomic<Backend> g_backend{Backend::openmp};

inline cplx phase(const Vec& k, const Vec& x) {
  double a = dot(k, x);
  return {std::cos(a), std::sin(a)};
}
}  // namespace

Backend default_backend() noexcept { return g_backend.load(); }
void set_default_backend(Backend b) noexcept { g_backend.store(b); }

void set_threads(int k) {
  if (k > 0) omp_set_num_threads(k);
}

int max_threads() { return omp_get_max_threads(); }

namespace kernels {

void kn_tabulate_serial(const Symbol& q, const Grid& g, double t, std::span<cplx> table) {
  const std::size_t M = g.size();
  for (std::size_t j = 0; j < M; ++j) {
    Vec x = g.point(j);
    for (std::size_t m = 0; m < M; ++m) {
      Vec k = g.frequency(m);
      table[j * M + m] = q(x, k, t) * phase(k, x);
    }
  }
}

void kn_tabulate_omp(const Symbol& q, const Grid& g, double t, std::span<cplx> table) {
  const auto M = static_cast<std::ptrdiff_t>(g.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < M; ++j) {
    Vec x = g.point(j);
    for (std::ptrdiff_t m = 0; m < M; ++m) {
      Vec k = g.frequency(m);
      table[j * M + m] = q(x, k, t) * phase(k, x);
    }
  }
}

void kn_matvec_serial(std::span<const cplx> table, std::span<const cplx> c, std::span<cplx> out) {
  const std::size_t M = c.size();
  for (std::size_t j = 0; j < M; ++j) {
    const cplx* row = table.data() + j * M;
    cplx acc = 0.0;
    for (std::size_t m = 0; m < M; ++m) acc += row[m] * c[m];
    out[j] = acc;
  }
}

void kn_matvec_omp(std::span<const cplx> table, std::span<const cplx> c, std::span<cplx> out) {
  const auto M = static_cast<std::ptrdiff_t>(c.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t j = 0; j < M; ++j) {
    const cplx* row = table.data() + j * M;
    cplx acc = 0.0;
    for (std::ptrdiff_t m = 0; m < M; ++m) acc += row[m] * c[m];
    out[j] = acc;
  }
}

void kn_direct_serial(const Symbol& q, const Grid& g, double t, std::span<const cplx> c,
                      std::span<cplx> out) {
  const std::size_t M = g.size();
  for (std::size_t j = 0; j < M; ++j) {
    Vec x = g.point(j);
    cplx acc = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      if (c[m] == cplx(0.0)) continue;
      Vec k = g.frequency(m);
      acc += q(x, k, t) * phase(k, x) * c[m];
    }
    out[j] = acc;
  }
}

void kn_direct_omp(const Symbol& q, const Grid& g, double t, std::span<const cplx> c,
                   std::span<cplx> out) {
  const auto M = static_cast<std::ptrdiff_t>(g.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t j = 0; j < M; ++j) {
    Vec x = g.point(j);
    cplx acc = 0.0;
    for (std::ptrdiff_t m = 0; m < M; ++m) {
      if (c[m] == cplx(0.0)) continue;
      Vec k = g.frequency(m);
      acc += q(x, k, t) * phase(k, x) * c[m];
    }
    out[j] = acc;
  }
}

void sweep_serial(const std::function<double(std::size_t)>& f, std::span<double> out) {
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(i);
}

void sweep_omp(const std::function<double(std::size_t)>& f, std::span<double> out) {
  const auto n = static_cast<std::ptrdiff_t>(out.size());
  // Exceptions cannot cross the parallel region; keep the lowest-index one.
  std::exception_ptr err;
  std::ptrdiff_t err_at = n;
#pragma omp parallel for schedule(dynamic, 8)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      out[i] = f(static_cast<std::size_t>(i));
    } catch (...) {
#pragma omp critical(qls_sweep_error)
      if (i < err_at) {
        err_at = i;
        err = std::current_exception();
      }
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace kernels
}  // namespace qls
