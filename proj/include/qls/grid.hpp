#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qls/types.hpp"

namespace qls {

// Periodic box [-L, L)^dim with N points per axis.
//   x_j = -L + j h,  h = 2L/N
//   k_m = pi m / L,  m in [-N/2, N/2), stored in FFT order
class Grid {
 public:
  Grid(int dim, double half_length, int points_per_axis);

  int dim() const noexcept { return dim_; }
  double half_length() const noexcept { return L_; }
  int points_per_axis() const noexcept { return N_; }
  std::size_t size() const noexcept { return size_; }
  double spacing() const noexcept { return 2.0 * L_ / N_; }
  double cell_volume() const noexcept;  // h^dim
  double box_volume() const noexcept;   // (2L)^dim
  double frequency_step() const noexcept { return pi / L_; }

  // Signed lattice index of storage position p in [0, N).
  int mode_index(int p) const noexcept { return p < N_ / 2 ? p : p - N_; }
  bool is_nyquist(int p) const noexcept { return p == N_ / 2; }

  std::size_t flat(int i0, int i1 = 0) const noexcept {
    return dim_ == 1 ? static_cast<std::size_t>(i0)
                     : static_cast<std::size_t>(i0) * N_ + i1;
  }
  std::array<int, 2> unflat(std::size_t idx) const noexcept {
    if (dim_ == 1) return {static_cast<int>(idx), 0};
    return {static_cast<int>(idx / N_), static_cast<int>(idx % N_)};
  }

  Vec point(std::size_t idx) const noexcept;
  Vec frequency(std::size_t idx) const noexcept;
  std::array<int, 2> mode(std::size_t idx) const noexcept;
  // Storage index of lattice mode (m0, m1); m must lie in [-N/2, N/2).
  std::size_t index_of_mode(int m0, int m1 = 0) const;

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int dim_;
  double L_;
  int N_;
  std::size_t size_;
};

class StateField {
 public:
  explicit StateField(const Grid& grid, double time = 0.0);
  StateField(const Grid& grid, std::vector<cplx> values, double time = 0.0);

  static StateField sample(const Grid& grid, const std::function<cplx(const Vec&)>& f,
                           double time = 0.0);
  static StateField plane_wave(const Grid& grid, int m0, int m1 = 0, double time = 0.0);
  static StateField random(const Grid& grid, unsigned seed, double time = 0.0);

  const Grid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  double time() const noexcept { return time_; }
  void set_time(double t) noexcept { time_ = t; }

  std::span<const cplx> values() const noexcept { return values_; }
  std::span<cplx> values() noexcept { return values_; }
  cplx& operator[](std::size_t i) noexcept { return values_[i]; }
  const cplx& operator[](std::size_t i) const noexcept { return values_[i]; }

  bool is_finite() const noexcept;
  void require_finite(const char* where) const;

  StateField& operator+=(const StateField& o);
  StateField& operator-=(const StateField& o);
  StateField& operator*=(cplx s);
  StateField& axpy(cplx s, const StateField& o);  // this += s*o

  StateField conj() const;
  StateField times(const StateField& o) const;  // pointwise product

 private:
  Grid grid_;
  std::vector<cplx> values_;
  double time_;
};

StateField operator+(StateField a, const StateField& b);
StateField operator-(StateField a, const StateField& b);
StateField operator*(cplx s, StateField a);

void require_same_grid(const Grid& a, const Grid& b, const char* where);

// Coefficients c_m in f(x_j) = sum_m c_m exp(i k_m . x_j), so
//   c_m = N^{-dim} sum_j f_j exp(-i k_m . x_j).
// With this normalization Parseval reads
//   h^dim sum_j |f_j|^2 = (2L)^dim sum_m |c_m|^2.
class Spectrum {
 public:
  explicit Spectrum(const Grid& grid);
  Spectrum(const Grid& grid, std::vector<cplx> coeffs);

  const Grid& grid() const noexcept { return grid_; }
  std::span<const cplx> coeffs() const noexcept { return c_; }
  std::span<cplx> coeffs() noexcept { return c_; }
  cplx& operator[](std::size_t i) noexcept { return c_[i]; }
  const cplx& operator[](std::size_t i) const noexcept { return c_[i]; }
  // Parseval weight (2L)^dim.
  double norm_weight() const noexcept { return grid_.box_volume(); }

 private:
  Grid grid_;
  std::vector<cplx> c_;
};

Spectrum forward_transform(const StateField& f);
StateField inverse_transform(const Spectrum& s, double time = 0.0);

double l2_norm(const StateField& f);
cplx inner(const StateField& f, const StateField& g);  // h^dim sum f conj(g)
double max_abs(const StateField& f);
double sobolev_norm(const StateField& f, double s);
double sobolev_norm(const Spectrum& c, double s);

// Spectral Fourier multiplier m(k). The Nyquist mode is passed its lattice
// frequency -pi N / (2L); odd multipliers should use the helpers below.
StateField apply_multiplier(const StateField& f, const std::function<cplx(const Vec&)>& m);
void apply_multiplier_inplace(Spectrum& c, const std::function<cplx(const Vec&)>& m);

// Spectral derivatives. Odd derivatives zero the Nyquist mode on their axis.
StateField partial(const StateField& f, int axis);
StateField second_partial(const StateField& f, int a, int b);
StateField laplacian(const StateField& f);
StateField bessel_potential(const StateField& f, double s);  // J^s f

// Unit cubes Q_mu = mu + [0, side)^dim, mu on the lattice side*Z^dim, and
// their doubles Q*_mu = points within per-axis periodic distance < side of
// the center.
struct Cube {
  std::array<int, 2> index{};
  Vec center{};
  std::vector<std::size_t> points;
  std::vector<std::size_t> double_points;
};

class CubePartition {
 public:
  explicit CubePartition(const Grid& grid, double side = 1.0);

  const Grid& grid() const noexcept { return grid_; }
  double side() const noexcept { return side_; }
  const std::vector<Cube>& cubes() const noexcept { return cubes_; }
  std::size_t cube_of(std::size_t point) const noexcept { return owner_[point]; }
  // Index of the cube containing x (wrapped into the box).
  std::size_t locate(const Vec& x) const;
  int cubes_per_axis() const noexcept { return per_axis_; }

 private:
  Grid grid_;
  double side_;
  int per_axis_;
  std::vector<Cube> cubes_;
  std::vector<std::size_t> owner_;
};

double periodic_offset(double d, double L);  // wrap d into [-L, L)

class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(double dt) : dt_(dt) {}

  void push(StateField f);  // enforces uniform spacing dt
  bool empty() const noexcept { return frames_.empty(); }
  std::size_t size() const noexcept { return frames_.size(); }
  double dt() const noexcept { return dt_; }
  double horizon() const noexcept;
  const StateField& operator[](std::size_t i) const { return frames_[i]; }
  const std::vector<StateField>& frames() const noexcept { return frames_; }
  const StateField& back() const { return frames_.back(); }

 private:
  double dt_ = 0.0;
  std::vector<StateField> frames_;
};

// || f ||_{L^2(Q_mu x [0,T])} for every cube, trapezoid in t.
std::vector<double> cube_space_time_norms(const Trajectory& tr, const CubePartition& part,
                                          double T);
double triple_norm_sup(const Trajectory& tr, const CubePartition& part, double T);
double triple_norm_sum(const Trajectory& tr, const CubePartition& part, double T);

// Trapezoid integral over [0,T] of a per-frame quantity sampled every dt.
double trapezoid_to(const std::vector<double>& samples, double dt, double T);

// Binary field records, little endian:
//   u32 dim, u32 N, f64 L, then N^dim pairs (f64 re, f64 im) in row-major order.
void write_field(std::ostream& os, const StateField& f);
StateField read_field(std::istream& is);
void write_fields(const std::string& path, const std::vector<StateField>& frames);
std::vector<StateField> read_fields(const std::string& path);

}  // namespace qls
