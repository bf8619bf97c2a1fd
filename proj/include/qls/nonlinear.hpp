#pragma once

#include <string>
#include <vector>

#include "qls/coeffs.hpp"
#include "qls/grid.hpp"
#include "qls/linear.hpp"
#include "qls/report.hpp"

namespace qls {

struct SolverConfig {
  double s = 2.0;          // Sobolev index of the ball X_{M0,T}
  double M0 = 1.0;
  double epsilon = 1e-2;
  double T = 1e-2;         // window length
  double dt = 1e-3;
  double picard_tol = 1e-10;
  int picard_max = 80;
};

// lambda = ||v0||_{H^s} + int_0^1 ||f(t)||_{H^s} dt
double data_size(const CoefficientSet& cs, const StateField& v0, double s);
// Throws ConfigError unless epsilon > 0, dt divides T and M0 > 2 lambda.
void validate_config(const SolverConfig& cfg, double lambda);

// L(u) v = i a(z(u)) d d v + b1(z(u)) . grad v + b2(z(u)) . grad conj(v) + c1 v + c2 conj(v)
StateField state_operator(const CoefficientSet& cs, const StateField& u, const StateField& v, double t);
// L(v) v; ComputationError on a ball excursion |z(v)| >= M.
StateField nonlinear_term(const CoefficientSet& cs, const StateField& v, double t);

// Gamma v(t) = e^{-eps t Lap^2} v0 + int_0^t e^{-eps (t - t') Lap^2} (L(v) v + f)(t') dt'
// on the frames of v; exact semigroup factors, trapezoid quadrature.
Trajectory duhamel_map(const CoefficientSet& cs, const Trajectory& v, const StateField& v0, double eps);
// e^{-eps t Lap^2} v0 on the lattice t = n dt, n <= steps.
Trajectory semigroup_orbit(const StateField& v0, double eps, double dt, long long steps);

enum class InitialIterate { semigroup, constant };

struct ViscousSolution {
  Trajectory trajectory;
  double epsilon = 0.0;
  std::vector<std::vector<double>> hierarchy;  // [frame][m] = ||J^{2m} u(t)||_2
  std::vector<double> differences;             // sup_t ||v_{n+1} - v_n||_{H^s}
  std::vector<double> ratios;                  // r_n = diff_n / diff_{n-1}
  int iterations = 0;
  double sup_hs = 0.0;
  double residual = 0.0;                       // sup_t ||Gamma u - u||_{H^s}

  json to_json() const;
};

// Picard iteration on Gamma over [t0, t0 + cfg.T]. Throws ComputationError
// "not contracting" after three consecutive ratios >= 1, on a ball
// excursion, or when the fixed point leaves X_{M0,T}.
ViscousSolution picard_solve(const CoefficientSet& cs, const SolverConfig& cfg, const StateField& v0,
                             InitialIterate init = InitialIterate::semigroup);

struct HierarchyReport {
  std::vector<double> times;
  std::vector<std::vector<double>> table;  // [frame][m]
  std::vector<double> growth;              // log(max_t level_m / level_m(0))
  std::vector<double> level_ratio;         // max_t level_m / level_{m-1}
  bool ladder_ok = false;
  json to_json() const;
};
// ||J^{2m} u(t)||_2 for m = 0..s/2; s must be an even integer.
HierarchyReport hierarchy_norms(const Trajectory& tr, double s);

struct WindowRecord {
  double start = 0.0;
  double length = 0.0;
  int iterations = 0;
  double max_ratio = 0.0;
  double hs_at_end = 0.0;
  double apriori_A = -1.0;  // -1 when not recorded
};

struct ContinuationOptions {
  int max_halvings = 6;
  bool record_apriori = true;
};

struct ContinuationResult {
  ViscousSolution solution;
  std::vector<WindowRecord> windows;
  double horizon = 0.0;
  bool reached_target = false;
  double violation_time = -1.0;
  std::string stop_reason;
  json to_json() const;
};

// Chains Picard windows while ||u||_{H^s} <= M0/4 at every restart;
// a window that fails to contract is halved up to max_halvings times.
ContinuationResult continuation_solve(const CoefficientSet& cs, const SolverConfig& cfg, const StateField& u0,
                                      double T_target, const ContinuationOptions& opt = {});

struct LimitReport {
  std::vector<double> eps;
  std::vector<double> horizons;
  double T_star = 0.0;
  std::vector<double> gaps;          // eps_i - eps_{i+1}
  std::vector<double> l2_diffs;      // sup_t ||u^eps_i - u^eps_{i+1}||_2
  std::vector<double> hs_bounds;     // sup_t ||u^eps||_{H^s} per run
  std::vector<double> hs1_interp;    // interpolation bound on the H^{s-1} difference
  std::vector<double> hs1_direct;
  double slope = 0.0;
  bool monotone = false;
  double limit_epsilon = 0.0;
  EstimateReport report;
  json to_json() const;
};

// Runs continuation for every eps (concurrently under the OpenMP backend) on
// the same lattice and compares consecutive pairs up to the common horizon.
LimitReport vanishing_viscosity(const CoefficientSet& cs, const SolverConfig& base, const StateField& u0,
                                std::vector<double> eps_list, double T_target, Backend backend = default_backend(),
                                const ContinuationOptions& opt = {});

// First window length (doubling from T0, then geometric bisection) at which
// picard_solve stops contracting, with steps_per_window steps per window.
struct FailingHorizon {
  double T_ok = 0.0;
  double T_fail = 0.0;
  std::string reason;
};
FailingHorizon failing_horizon(const CoefficientSet& cs, SolverConfig cfg, const StateField& v0, double T0,
                               double T_max, int steps_per_window = 32, int bisection_steps = 10);

// Every (u, v) pair is scaled by every lambda.
struct BoundSample {
  double lambda = 0.0;
  double u_hs = 0.0;
  double v_hs = 0.0;
  double measured = 0.0;  // ||L(u) v||_{H^{s-2}}
};
std::vector<BoundSample> nonlinear_bound_corpus(const CoefficientSet& cs, const std::vector<StateField>& us,
                                                const std::vector<StateField>& vs,
                                                const std::vector<double>& lambdas, double s);

// measured <= C ||v||_{H^s} (1 + ||u||_{H^s} + ||u||_{H^s}^P): the (C, P)
// minimizing the spread of log(measured / model), C at its geometric middle.
struct PowerFit {
  double C = 0.0;
  int P = 0;
  double max_violation = 0.0;  // max relative excess of a sample over the fitted bound
  EstimateReport report;
};
PowerFit fit_nonlinear_bound(const std::vector<BoundSample>& samples, int P_max = 6, double tol = 0.25);

}  // namespace qls
