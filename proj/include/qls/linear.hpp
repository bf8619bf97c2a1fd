#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "qls/coeffs.hpp"
#include "qls/grid.hpp"
#include "qls/psido.hpp"
#include "qls/report.hpp"
#include "qls/symbols.hpp"

namespace qls {

// (u, v) with v playing the role of conj(u).
struct FieldPair {
  StateField u;
  StateField v;

  FieldPair& operator+=(const FieldPair& o);
  FieldPair& operator-=(const FieldPair& o);
  FieldPair& operator*=(cplx s);
};
FieldPair operator+(FieldPair a, const FieldPair& b);
FieldPair operator-(FieldPair a, const FieldPair& b);
double l2_norm(const FieldPair& w);
FieldPair conjugate_pair(const StateField& u);  // (u, conj u)

struct GaugeData {
  double R = 4.0;
  double C0tilde = 0.0;  // 2 / C0' by default, set by the caller
  std::optional<Symbol> gamma;
};

// u_t = -eps Lap^2 u + i d_j(a_jk d_k u) + b1 . grad u + b2 . grad conj(u)
//       + c1 u + c2 conj(u) + f
struct LinearSystem {
  FrozenLinearCoefficients frozen;
  double epsilon = 0.0;
  std::function<StateField(double)> forcing;  // empty: frozen.f for all t
  GaugeData gauge;

  LinearSystem(FrozenLinearCoefficients fz, double eps);
  const Grid& grid() const noexcept { return frozen.grid; }
  StateField forcing_at(double t) const;
};

// a = I, everything else zero.
LinearSystem free_system(const Grid& g, double eps);
// Linear system whose divergence form reproduces the non-divergence
// equation frozen at u: b1_k picks up -i d_j a_jk.
LinearSystem linear_system_from_state(const CoefficientSet& cs, const StateField& u, double t, double eps);

// i d_j((a_jk - delta_jk) d_k u); the identity part lives in the exact multiplier.
StateField metric_deviation_part(const FrozenLinearCoefficients& fz, const StateField& u);
// d_j(a_jk d_k u)
StateField divergence_operator(const FrozenLinearCoefficients& fz, const StateField& u);
// b1 . grad u + b2 . grad conj(u) + c1 u + c2 conj(u)
StateField lower_order_part(const FrozenLinearCoefficients& fz, const StateField& u);
// Full right-hand side at time t.
StateField linear_rhs(const LinearSystem& sys, const StateField& u, double t);

// Strang splitting: exact half steps of exp(tau (-eps |k|^4 - i |k|^2))
// around an explicit midpoint step for the remaining terms. Frames are saved
// every save_every steps. Aborts with ComputationError when ||u||_2 exceeds
// 1e6 times its reference size.
Trajectory evolve(const LinearSystem& sys, const StateField& u0, double T, double dt, int save_every = 1);

// Gaussian packet exp(-|x - c|^2 / (2 w^2) + i k . x) with lattice-aligned k.
StateField wave_packet(const Grid& g, const Vec& center, const Vec& k, double width);

// System on w = (u, conj u):
//   H = diag(i L - eps Lap^2, -i L - eps Lap^2),  L = d_j a_jk d_k
//   B = [[b1 . grad, b2 . grad], [conj(b2) . grad, conj(b1) . grad]]
//   C = [[c1, c2], [conj(c2), conj(c1)]]
struct VectorSystem {
  FrozenLinearCoefficients frozen;
  double epsilon = 0.0;

  FieldPair H(const FieldPair& w) const;
  FieldPair B(const FieldPair& w) const;
  FieldPair C(const FieldPair& w) const;
  FieldPair apply(const FieldPair& w) const;  // H + B + C
  // Off-diagonal blocks of B.
  StateField B12(const StateField& v) const;
  StateField B21(const StateField& u) const;
};
VectorSystem build_vector_system(const LinearSystem& sys);

// Parametrix of L: symbol -theta_R(xi) / (a_jk xi_j xi_k).
QuantizedOperator tilde_L(const FrozenLinearCoefficients& fz, double R);
// max deviation || tildeL L e_k - e_k || / ||e_k|| per probe mode along axis 0.
EstimateReport tilde_l_check(const FrozenLinearCoefficients& fz, double R, const std::vector<int>& modes);

// Lambda = I - S with S12 = (i/2) B12 tildeL, S21 = -(i/2) B21 tildeL.
struct Diagonalization {
  VectorSystem system;
  double R = 0.0;
  std::optional<QuantizedOperator> tl;
  double S_norm = 0.0;
  double neumann_tol = 1e-13;
  int neumann_max = 200;

  FieldPair S(const FieldPair& w) const;
  FieldPair lambda(const FieldPair& w) const;
  FieldPair lambda_inverse(const FieldPair& w, int* terms = nullptr) const;
  // Lambda (H + B + C) Lambda^{-1}
  FieldPair transformed(const FieldPair& w) const;
};

// Throws ComputationError when the measured ||S|| is not below 1/2.
Diagonalization diagonalize(const VectorSystem& sys, double R);
// First R in {R0, 2 R0, 4 R0, ...} with ||S|| < 1/2.
Diagonalization diagonalize_auto(const VectorSystem& sys, double R0 = 2.0, int max_doublings = 10);

// Anti-diagonal parts of the raw and transformed bundles applied to probes
// e_k in one slot; reports both log-log growth exponents in |k|.
EstimateReport antidiagonal_residual(const Diagonalization& d, const std::vector<int>& modes);
// max || Lambda^{-1} Lambda w - w || / ||w|| over the corpus.
double lambda_roundtrip(const Diagonalization& d, const std::vector<StateField>& corpus);

// Psi_M = diag(Psi_q1, Psi_q2), q1 = exp(theta_R C gamma), q2 = exp(-theta_R C gamma).
struct GaugeOperator {
  std::optional<QuantizedOperator> q1, q2;
  double tol = 1e-12;
  int max_terms = 200;

  FieldPair apply(const FieldPair& w) const;
  FieldPair inverse(const FieldPair& w, int* terms = nullptr) const;
};
GaugeOperator gauge_operator(const Grid& g, const Symbol& gamma, double R, double C0tilde);
GaugeOperator gauge_operator(const LinearSystem& sys);
// max || Psi^{-1} Psi w - w || / ||w|| over (f, conj f) pairs.
EstimateReport gauge_roundtrip(const GaugeOperator& op, const std::vector<StateField>& corpus);

struct AprioriReport {
  double lhs = 0.0;
  double rhs_data = 0.0;
  double A = 0.0;
  double T = 0.0;
  double sup_l2_sq = 0.0;
  double smoothing_sq = 0.0;  // sup over cubes of ||J^{1/2} u||^2 on Q x [0, T]
  std::vector<double> cube_smoothing_sq;

  json to_json() const;
};

// lhs = sup_t ||u||^2 + sup_mu ||J^{1/2} u||^2_{L^2(Q_mu x [0,T])},
// rhs = ||u0||^2 + (int_0^T ||f|| dt)^2 with ||f|| sampled on the frames.
AprioriReport apriori_report(const Trajectory& tr, const CubePartition& part, double T,
                             const std::vector<double>& forcing_norms = {});
std::vector<double> forcing_norms(const LinearSystem& sys, const Trajectory& tr);

}  // namespace qls
