#pragma once

#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "qls/grid.hpp"
#include "qls/kernels.hpp"
#include "qls/report.hpp"
#include "qls/symbols.hpp"

namespace qls {

enum class OperatorKind { multiplier, multiplication, general };
const char* to_string(OperatorKind k);

// Classifies q by sampling grid points and lattice frequencies at time t.
OperatorKind detect_kind(const Symbol& q, const Grid& g, double t = 0.0);

// Discrete Kohn-Nirenberg quantization
//   (Psi_q f)(x_j) = sum_m q(x_j, k_m, t) c_m exp(i k_m . x_j)
// with c_m the spectrum of f. Multipliers and multiplications take exact
// fast paths; the general kind costs O(N^{2 dim}).
class QuantizedOperator {
 public:
  QuantizedOperator(Symbol q, const Grid& g);
  QuantizedOperator(Symbol q, const Grid& g, OperatorKind forced);

  OperatorKind kind() const noexcept { return kind_; }
  const Symbol& symbol() const noexcept { return q_; }
  const Grid& grid() const noexcept { return grid_; }

  StateField apply(const StateField& f) const { return apply(f, f.time()); }
  StateField apply(const StateField& f, double t) const { return apply(f, t, default_backend()); }
  StateField apply(const StateField& f, double t, Backend b) const;

  // Largest table (entries) kept in the cache; larger grids evaluate on the fly.
  static constexpr std::size_t max_table_entries = std::size_t{1} << 22;

 private:
  struct Cache;
  Symbol q_;
  Grid grid_;
  OperatorKind kind_;
  std::shared_ptr<Cache> cache_;
};

// sum_j S^j f, stopped once ||S^j f|| < tol ||f||. Throws ComputationError
// when the increments grow three times in a row.
template <class V, class Op>
V neumann_inverse_apply(const Op& S, const V& f, double tol, int max_terms, int* terms_used = nullptr) {
  double base = l2_norm(f);
  V result = f;
  if (base == 0.0) {
    if (terms_used) *terms_used = 0;
    return result;
  }
  V term = f;
  double prev = base;
  int growth = 0;
  for (int j = 1; j <= max_terms; ++j) {
    term = S(term);
    double inc = l2_norm(term);
    if (!std::isfinite(inc)) throw ComputationError("neumann series: non-finite increment");
    result += term;
    if (inc < tol * base) {
      if (terms_used) *terms_used = j;
      return result;
    }
    growth = inc > prev ? growth + 1 : 0;
    if (growth >= 3)
      throw ComputationError("neumann series diverging: R too small, Lambda not invertible");
    prev = inc;
  }
  throw ComputationError("neumann series: tolerance not reached within max_terms");
}

StateField neumann_inverse_apply(const std::function<StateField(const StateField&)>& S,
                                 const StateField& f, double tol, int max_terms);

// Largest ||S x|| / ||x|| seen over power iterations from a random start.
template <class V, class Op, class Gen>
double estimate_operator_norm(const Op& S, Gen&& random_start, int iterations = 20) {
  V x = random_start();
  double nx = l2_norm(x);
  if (nx == 0.0) throw ConfigError("operator norm: zero start vector");
  double best = 0.0;
  for (int it = 0; it < iterations; ++it) {
    V y = S(x);
    double ny = l2_norm(y);
    best = std::max(best, ny / nx);
    if (ny == 0.0) break;
    x = y;
    nx = ny;
  }
  return best;
}

double estimate_operator_norm(const std::function<StateField(const StateField&)>& S, const Grid& g,
                              unsigned seed, int iterations = 20);

// min over trials of Re<Psi_q u, u> / ||u||^2; fitted C = max(0, -min).
// Pass iff the fitted C stays below c_bound.
EstimateReport garding_check(const Symbol& q, const std::vector<StateField>& trials,
                             double c_bound = 10.0);

// ||(Psi_b Psi_a - Psi_{ab}) e_k|| / ||e_k|| over the probe modes, with the
// log-log growth exponent in |k|. For a = a(x), b = b(xi) this is the
// commutator part of the calculus.
EstimateReport composition_remainder(const Symbol& a, const Symbol& b, const Grid& g,
                                     const std::vector<int>& modes);

// max over trajectories of |||Psi_a f|||_T / |||f|||_T.
EstimateReport triple_norm_bound(const QuantizedOperator& op, const std::vector<Trajectory>& corpus,
                                 const CubePartition& part, double T);

}  // namespace qls
