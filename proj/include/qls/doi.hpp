#pragma once

#include <utility>
#include <vector>

#include "qls/hamiltonian.hpp"
#include "qls/report.hpp"
#include "qls/symbols.hpp"

namespace qls {

// An order-0 escape symbol with the constants it achieved.
struct EscapeSymbol {
  Symbol symbol;
  Vec center{};
  double n_weight = 0.0;
  EstimateReport report;
};

// r(x, xi) = theta_R(xi) arctan(x . xi / |xi|), analytic derivatives.
EscapeSymbol flat_escape_symbol(int dim, double R_cut);

// 33^dim points on [-L/2, L/2]^dim; |xi| geometric in [2 R_cut, xi_max] with
// 33 directions in 2D (+-1 in 1D).
SymbolSample default_doi_sample(int dim, double L, double R_cut, double xi_max = 1e5, int nx = 33,
                                int n_mag = 33, int n_dir = 33);

// max over the sample of |{|xi|^2, r} - 2 theta |xi| / (1 + (x.xi/|xi|)^2)|,
// absolute and relative to max(1, |value|).
EstimateReport flat_identity_check(const EscapeSymbol& r, const SymbolSample& sample, double R_cut);

// Largest B in (0, 1] with min(H_h p - B |xi|/<x>^2 + 1/B) >= 0 over the
// sample restricted to |xi| >= xi_min (40 bisection steps). Pass iff B* > 0.01.
EstimateReport verify_lower_bound(const Symbol& h, const Symbol& p, const SymbolSample& sample,
                                  double xi_min);

struct BumpBoundOptions {
  double c3 = 1.0;         // constant allowance
  double margin = 0.05;    // C1 = (1 - margin) C1max
  double threshold = 0.01; // pass iff C1 > threshold and C2 >= threshold
};

// H_h p_mu >= C1 |xi|/<x - x_mu>^2 + C2 |xi|/<x>^2 - C3 on the sample.
EstimateReport verify_bump_bound(const Symbol& h, const Symbol& p_mu, const Vec& x_mu,
                                 const SymbolSample& sample, const BumpBoundOptions& opt = {});

// p_mu = N p + r(. - x_mu) with the smallest N <= N_max passing the bump bound.
EscapeSymbol uncentered_symbol(const EscapeSymbol& p, const EscapeSymbol& r, const Vec& x_mu,
                               const Symbol& h, int N_max, const SymbolSample& sample,
                               const BumpBoundOptions& opt = {});

// Largest t in [0, t_max] (bisection) with
//   |2 (a(t) - a(0)) xi . d_x p - (xi . (d a(t) - d a(0)) xi) . d_xi p| <= c |xi|/<x>^2
// on the sample, where c is the budget coefficient.
EstimateReport time_stability_horizon(const MetricField& a, const EscapeSymbol& p_mu,
                                      const SymbolSample& sample, double budget_coeff, double t_max);

// sup over the sample of (|A1| + |grad A1|) <x>^2, and the ratio of its
// outer-shell max (|x| >= 3/4 x_max) to its inner max (|x| <= x_max / 2).
EstimateReport metric_flatness(const MetricField& a1, const std::vector<Vec>& xs, bool subtract_identity);

// Largest eta in [0, eta_cap] keeping the eta-correction of H_{A0 + eta A1} p
// below budget_coeff |xi|/<x>^2. Throws ConfigError when A1 is not flat.
EstimateReport perturbation_margin(const MetricField& a0, const MetricField& a1,
                                   const EscapeSymbol& p_mu, const SymbolSample& sample,
                                   double budget_coeff, double eta_cap = 10.0);

// gamma = p_mu0 + sum beta_mu p_mu over terms with beta_mu > 1e-12.
Symbol assemble_gamma(const Symbol& p_mu0, const std::vector<std::pair<double, Symbol>>& terms);

}  // namespace qls
