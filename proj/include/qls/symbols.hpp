#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "qls/types.hpp"

namespace qls {

// q(x, xi, t) tagged with an order m. Immutable; copies share the rule.
class Symbol {
 public:
  using Eval = std::function<cplx(const Vec& x, const Vec& xi, double t)>;
  using Grad = std::function<CVec(const Vec& x, const Vec& xi, double t)>;

  Symbol(int dim, double order, Eval eval, std::string label);

  // Attach analytic first derivatives; without them centered differences are used.
  Symbol with_gradients(Grad dx, Grad dxi) const;
  Symbol with_fd_steps(double hx, double hxi) const;
  Symbol relabeled(std::string label) const;
  Symbol with_order(double m) const;

  int dim() const noexcept;
  double order() const noexcept;
  const std::string& label() const noexcept;
  bool has_analytic_gradients() const noexcept;
  double fd_step_x() const noexcept;
  double fd_step_xi() const noexcept;

  cplx operator()(const Vec& x, const Vec& xi, double t = 0.0) const;
  CVec grad_x(const Vec& x, const Vec& xi, double t = 0.0) const;
  CVec grad_xi(const Vec& x, const Vec& xi, double t = 0.0) const;
  // Centered-difference derivatives regardless of analytic rules.
  CVec fd_grad_x(const Vec& x, const Vec& xi, double t, double h) const;
  CVec fd_grad_xi(const Vec& x, const Vec& xi, double t, double h) const;

 private:
  struct Impl;
  explicit Symbol(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

Symbol constant_symbol(int dim, cplx c);
// x-only symbol with optional analytic gradient.
Symbol multiplication_symbol(int dim, std::function<cplx(const Vec&, double)> f,
                             std::function<CVec(const Vec&, double)> df, std::string label);
// xi-only symbol of order m with optional analytic gradient.
Symbol multiplier_symbol(int dim, double order, std::function<cplx(const Vec&)> f,
                         std::function<CVec(const Vec&)> df, std::string label);

Symbol operator+(const Symbol& a, const Symbol& b);
Symbol operator-(const Symbol& a, const Symbol& b);
Symbol operator*(const Symbol& a, const Symbol& b);
Symbol operator*(cplx s, const Symbol& a);
Symbol exp(const Symbol& a);
// (x, xi) -> q(x - center, xi)
Symbol shifted(const Symbol& q, const Vec& center);

// theta_R(xi) = 1 - phi(xi / R) with phi = 1 on |y| < 1, 0 on |y| >= 2.
Symbol cutoff_theta(int dim, double R);
double smooth_step(double t);  // 0 for t <= 0, 1 for t >= 1
double smooth_step_derivative(double t);
double cutoff_phi(double r);  // radial profile of phi

// (1 + |xi|^2)^{s/2}
Symbol japanese_bracket_xi(int dim, double s);
// |xi|^2
Symbol flat_hamiltonian(int dim);

// {h, p} = sum_i dh/dxi_i dp/dx_i - dh/dx_i dp/dxi_i
Symbol poisson_bracket(const Symbol& h, const Symbol& p);

// Sample set for sup estimates: every x in xs paired with every xi in xis.
struct SymbolSample {
  int dim = 1;
  std::vector<Vec> xs;
  std::vector<Vec> xis;

  std::size_t size() const noexcept { return xs.size() * xis.size(); }
  // x on a uniform tensor grid over [-x_max, x_max]^dim; |xi| geometric in
  // [xi_min, xi_max] times directions evenly spread on the unit circle (1D: +-1).
  static SymbolSample box(int dim, double x_max, int nx, double xi_min, double xi_max,
                          int n_mag, int n_dir);
};

struct SeminormEntry {
  std::array<int, 2> alpha{};  // xi derivative orders
  std::array<int, 2> beta{};   // x derivative orders
  double measured = 0.0;
  bool pass = false;
};

struct SeminormReport {
  double order_claimed = 0.0;
  double threshold = 0.0;
  std::vector<SeminormEntry> entries;
  bool pass() const;
  const SeminormEntry& entry(std::array<int, 2> alpha, std::array<int, 2> beta) const;
};

// sup over the sample of |d_xi^alpha d_x^beta q| (1 + |xi|)^{|alpha| - m}
// for |alpha| <= max_alpha, |beta| <= max_beta, via nested centered
// differences (steps rel_step in x, rel_step (1 + |xi|) in xi).
SeminormReport estimate_seminorms(const Symbol& q, double m, int max_alpha, int max_beta,
                                  const SymbolSample& sample, double threshold,
                                  double rel_step = 0.05);

}  // namespace qls
