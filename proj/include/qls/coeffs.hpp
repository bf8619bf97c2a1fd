#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "qls/grid.hpp"
#include "qls/hamiltonian.hpp"
#include "qls/report.hpp"

namespace qls {

// z = (u, conj u, grad u, grad conj u); slots 3 and 5 stay zero in 1D.
using ZVec = std::array<cplx, 6>;
inline constexpr int z_u = 0, z_ubar = 1, z_du = 2, z_dubar = 4;
double z_norm(const ZVec& z, int dim);

struct CoefficientMeta {
  double M = 1.0;        // ball radius for z
  double gamma_M = 0.0;  // claimed ellipticity, 0 = unspecified
  double C_M = 0.0;      // claimed flatness constant, 0 = unspecified
  double C0 = 0.0;
};

// Coefficients of
//   u_t = i a_jk d_j d_k u + b1 . grad u + b2 . grad conj(u) + c1 u + c2 conj(u) + f
struct CoefficientSet {
  int dim = 1;
  std::string name;
  json params = json::object();
  CoefficientMeta meta;
  std::function<Mat2(const Vec&, double, const ZVec&)> a;
  std::function<CVec(const Vec&, double, const ZVec&)> b1;
  std::function<CVec(const Vec&, double, const ZVec&)> b2;
  std::function<cplx(const Vec&, double, cplx, cplx)> c1;
  std::function<cplx(const Vec&, double, cplx, cplx)> c2;
  std::function<cplx(const Vec&, double)> f;
  // Metric at z = 0 with analytic gradients, when the family provides one.
  std::optional<MetricField> metric0;
  bool a_depends_on_z = false;
  bool translation_invariant = false;
};

// Registry: flat, bump-metric, time-modulated-bump, quadratic-b1,
// cubic-semilinear, trap-metric. Unknown names or bad parameters raise ConfigError.
CoefficientSet make_coefficients(const std::string& name, int dim, const json& params = json::object());
std::vector<std::string> registry_names();

// Coefficients evaluated at a state, as grid fields.
struct FrozenLinearCoefficients {
  Grid grid;
  double t = 0.0;
  std::array<StateField, 3> a;       // a00, a01, a11 (real valued)
  std::array<StateField, 2> b1;      // vector field, symbol i b1 . xi
  std::array<StateField, 2> b2;
  StateField c1, c2, f;
  std::array<StateField, 3> dt_a;    // time derivatives by substituting u_t
  std::array<StateField, 2> dt_b1;
  std::array<StateField, 2> dt_b2;
  double max_z = 0.0;

  explicit FrozenLinearCoefficients(const Grid& g);
  Mat2 a_at(std::size_t i) const;
  MetricField metric() const;  // sampled metric for ray tracing
};

// Evaluates every coefficient at (x, t, u, conj u, grad u, grad conj u) with
// spectral gradients. Throws ComputationError on a ball excursion.
FrozenLinearCoefficients freeze_at_state(const CoefficientSet& cs, const StateField& u, double t);
// Right-hand side of the quasilinear equation at the state (non-divergence form).
StateField equation_rhs(const CoefficientSet& cs, const StateField& u, double t);

// Sample of z in the ball B_M: zero, axis vectors and seeded random points.
std::vector<ZVec> default_z_sample(int dim, double M, unsigned seed, int count = 12);

struct ValidationOptions {
  int positions = 8;          // ray sample positions per axis
  int directions = 16;
  double s_budget = 50.0;
  double ray_ds = 1e-2;
  bool run_rays = true;
};

// NL1-NL7 report; NL7 runs the ray classifier on the metric frozen at u0
// (or at z = 0 when u0 is absent).
EstimateReport validate_assumptions(const CoefficientSet& cs, const Grid& grid, const std::vector<ZVec>& zs,
                                    const StateField* u0 = nullptr, const ValidationOptions& opt = {});
// L1-L5 report for coefficients frozen at a state.
EstimateReport validate_linear(const FrozenLinearCoefficients& fz, const ValidationOptions& opt = {});
// D1-D5 report for a time-independent metric.
EstimateReport validate_metric(const MetricField& a, const Grid& grid, const ValidationOptions& opt = {});

// Decomposition b = sum alpha_mu phi_mu with phi_mu supported
// in the double cube, sup-norm of derivatives up to N_smooth at most 1.
struct CubeDecomposition {
  Grid grid;
  int n_smooth = 4;
  std::vector<double> alpha;
  std::vector<std::vector<std::size_t>> support;  // grid indices per cube
  std::vector<std::vector<cplx>> phi;             // phi_mu on its support

  explicit CubeDecomposition(const Grid& g) : grid(g) {}
  StateField reconstruct() const;
  double alpha_sum() const;
};

// Smooth partition of unity eta_mu subordinate to the doubles.
std::vector<std::vector<double>> partition_of_unity(const CubePartition& part);
CubeDecomposition cube_decompose(const StateField& b, const CubePartition& part, int n_smooth = 4);
// sup over the grid of all finite-difference derivatives up to order n of g
// restricted to idx (values outside idx treated as zero).
double fd_cn_norm(const StateField& g, const std::vector<std::size_t>& idx, int n);

// beta_mu = (1 + dim/4) sup_{Q_mu} |f|, so that |f(x)| <= sum_mu beta_mu <x - x_mu>^-2.
std::vector<double> cube_sup_weights(const StateField& f, const CubePartition& part);

// sum over |alpha| <= M of || d^alpha g ||_{L^1} (spectral derivatives).
double w1m_norm(const StateField& g, int M);

using ZRule = std::function<cplx(const Vec&, double, const ZVec&)>;
// Checks rule(x, t, 0) = 0 and d_z rule(x, t, 0) = 0 at sampled x.
bool rule_vanishes_to_second_order(const ZRule& rule, int dim, double tol = 1e-8);
// W^{1,M} norm of x -> rule(x, t, z(u)(x)); throws ConfigError when the
// second-order vanishing precondition fails.
double w1m_check(const ZRule& rule, const StateField& u, int M, double t = 0.0);
// z(u) at every grid point.
std::vector<ZVec> state_z(const StateField& u);

}  // namespace qls
