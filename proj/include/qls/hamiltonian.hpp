#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "qls/grid.hpp"
#include "qls/symbols.hpp"

namespace qls {

// Symmetric metric a_{jk}(x, t) with spatial gradients; gradient(x,t)[j] = d a / d x_j.
struct MetricField {
  int dim = 1;
  std::string name;
  std::function<Mat2(const Vec&, double)> value;
  std::function<std::array<Mat2, 2>(const Vec&, double)> gradient;

  Mat2 operator()(const Vec& x, double t = 0.0) const { return value(x, t); }
};

MetricField flat_metric(int dim);
// a = g(|x|) delta with g' supplied.
MetricField radial_metric(int dim, std::string name, std::function<double(double)> g,
                          std::function<double(double)> dg);
// a = (1 + amp exp(-|x|^2 / width^2)) delta
MetricField gaussian_bump_metric(int dim, double amp, double width = 1.0);
// a = (1 + amp beta(|x| / radius)) delta, beta(s) = exp(1 - 1/(1 - s^2)) on s < 1
MetricField compact_bump_metric(int dim, double amp, double radius);
double compact_bump(double s);
double compact_bump_derivative(double s);
// a = (1 - depth exp(-(|x|/r0)^power)) delta. Has a stable closed circular
// ray near |x| = 0.745 r0 for depth 0.8, power 8.
MetricField circular_trap_metric(int dim, double depth = 0.8, double r0 = 4.0, int power = 8);
// base(x) + t rho(x) delta
MetricField time_modulated_metric(const MetricField& base, std::function<double(const Vec&)> rho,
                                  std::function<Vec(const Vec&)> drho);
// A0 + eta A1
MetricField combined_metric(const MetricField& a0, const MetricField& a1, double eta);
// Metric sampled on a grid: components a00, a01, a11 (a11 ignored in 1D).
// Gradients from 4th-order centered differences, off-grid values from
// tensor cubic interpolation.
MetricField sampled_metric(const Grid& g, std::vector<double> a00, std::vector<double> a01,
                           std::vector<double> a11, std::string name);

// h(x, xi) = a_{jk}(x, t) xi_j xi_k with analytic gradients.
Symbol principal_symbol(const MetricField& a, double t = 0.0);
double hamiltonian_value(const MetricField& a, const Vec& x, const Vec& xi, double t = 0.0);

struct RayState {
  Vec X{};
  Vec Xi{};
  double s = 0.0;
};

struct RayOptions {
  double drift_tol = 1e-6;  // per-step relative h drift before halving
  int max_halvings = 10;
  double t = 0.0;           // frozen time of the metric
};

// Classical RK4 on dX/ds = 2 A Xi, dXi_j/ds = -(d_j A) Xi . Xi.
// Negative ds integrates backward. States are returned at every full step.
std::vector<RayState> integrate_ray(const MetricField& a, const Vec& x0, const Vec& xi0, double ds,
                                    double s_max, const RayOptions& opt = {});
// Sup over the returned states of |h - h0| / |h0|.
double relative_h_drift(const MetricField& a, const std::vector<RayState>& path, double t = 0.0);

enum class RayStatus { escaped, undetermined, failed };
const char* to_string(RayStatus s);

struct RayRecord {
  Vec x0{};
  Vec xi0{};
  bool escaped_forward = false;
  bool escaped_backward = false;
  double exit_forward = -1.0;   // flow time at |X| = escape_radius, -1 if none
  double exit_backward = -1.0;
  double h_drift = 0.0;
  double max_radius = 0.0;
  RayStatus status = RayStatus::undetermined;
  std::string error;
};

struct RayVerdict {
  std::vector<RayRecord> rays;
  bool nontrapping_on_sample = false;
  std::size_t worst_ray = 0;
  std::size_t undetermined = 0;
  std::size_t failed = 0;
  double escape_radius = 0.0;
  double s_budget = 0.0;
};

struct RaySample {
  std::vector<Vec> x0;
  std::vector<Vec> xi0;
};

// positions^dim points on [-extent, extent]^dim times unit directions
// (1D: +-1; 2D: `directions` evenly spaced).
RaySample default_ray_sample(int dim, double extent, int positions = 8, int directions = 16);

// Independent rays fanned out over workers; results are stored by ray index
// so the verdict does not depend on scheduling.
RayVerdict classify_nontrapping(const MetricField& a, const RaySample& sample, double escape_radius,
                                double s_budget = 50.0, double ds = 1e-2, const RayOptions& opt = {});
RayVerdict classify_nontrapping_serial(const MetricField& a, const RaySample& sample,
                                       double escape_radius, double s_budget = 50.0, double ds = 1e-2,
                                       const RayOptions& opt = {});

void write_rays_csv(std::ostream& os, const RayVerdict& v);

}  // namespace qls
