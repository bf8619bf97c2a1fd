#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

namespace qls {

using cplx = std::complex<double>;

// Points and covectors. In 1D only the first component is used and the
// second stays zero, so the same arithmetic serves both dimensions.
using Vec = std::array<double, 2>;
using CVec = std::array<cplx, 2>;

inline constexpr double pi = 3.14159265358979323846;

inline double dot(const Vec& a, const Vec& b) { return a[0] * b[0] + a[1] * b[1]; }
inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }
inline double bracket(const Vec& a) { return std::sqrt(1.0 + dot(a, a)); }  // <x>
inline Vec operator+(const Vec& a, const Vec& b) { return {a[0] + b[0], a[1] + b[1]}; }
inline Vec operator-(const Vec& a, const Vec& b) { return {a[0] - b[0], a[1] - b[1]}; }
inline Vec operator*(double s, const Vec& a) { return {s * a[0], s * a[1]}; }

// Symmetric 2x2 (1x1 embedded) real matrix.
struct Mat2 {
  std::array<std::array<double, 2>, 2> m{};

  double& operator()(int i, int j) { return m[i][j]; }
  double operator()(int i, int j) const { return m[i][j]; }

  static Mat2 scalar(double s, int dim) {
    Mat2 r;
    r.m[0][0] = s;
    if (dim == 2) r.m[1][1] = s;
    return r;
  }
  double quad(const Vec& v) const {
    return m[0][0] * v[0] * v[0] + 2.0 * m[0][1] * v[0] * v[1] + m[1][1] * v[1] * v[1];
  }
  Vec apply(const Vec& v) const {
    return {m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]};
  }
  // Extreme eigenvalues of the active block.
  std::array<double, 2> eig_range(int dim) const {
    if (dim == 1) return {m[0][0], m[0][0]};
    double tr = 0.5 * (m[0][0] + m[1][1]);
    double d = std::sqrt(0.25 * (m[0][0] - m[1][1]) * (m[0][0] - m[1][1]) + m[0][1] * m[1][0]);
    return {tr - d, tr + d};
  }
};

// Raised for malformed inputs: wrong shapes, mismatched grids, bad configs.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised when a numerical procedure cannot produce a trustworthy answer.
class ComputationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace qls
