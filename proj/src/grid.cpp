#include "qls/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cstring>
#include <map>
#include <mutex>
#include <random>

namespace qls {

namespace {

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

struct PlanPair {
  fftw_plan fwd;
  fftw_plan bwd;
};

// Plans are created once per shape and live for the process. Creation is
// serialized; execution through fftw_execute_dft is thread safe.
const PlanPair& plans_for(int dim, int n) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, PlanPair> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find({dim, n});
  if (it != cache.end()) return it->second;
  std::size_t total = dim == 1 ? n : static_cast<std::size_t>(n) * n;
  auto* buf = fftw_alloc_complex(total);
  // ESTIMATE keeps the algorithm choice, and so the rounding, reproducible.
  unsigned flags = FFTW_ESTIMATE;
  PlanPair p{};
  if (dim == 1) {
    p.fwd = fftw_plan_dft_1d(n, buf, buf, FFTW_FORWARD, flags);
    p.bwd = fftw_plan_dft_1d(n, buf, buf, FFTW_BACKWARD, flags);
  } else {
    p.fwd = fftw_plan_dft_2d(n, n, buf, buf, FFTW_FORWARD, flags);
    p.bwd = fftw_plan_dft_2d(n, n, buf, buf, FFTW_BACKWARD, flags);
  }
  fftw_free(buf);
  return cache.emplace(std::make_pair(dim, n), p).first->second;
}

// Plans assume SIMD alignment, so every transform goes through an aligned
// per-thread scratch buffer.
void run(const fftw_plan plan, std::vector<cplx>& data) {
  struct Scratch {
    fftw_complex* ptr = nullptr;
    std::size_t size = 0;
    ~Scratch() { fftw_free(ptr); }
  };
  thread_local Scratch s;
  if (s.size < data.size()) {
    fftw_free(s.ptr);
    s.ptr = fftw_alloc_complex(data.size());
    s.size = data.size();
  }
  std::memcpy(s.ptr, data.data(), data.size() * sizeof(cplx));
  fftw_execute_dft(plan, s.ptr, s.ptr);
  std::memcpy(data.data(), s.ptr, data.size() * sizeof(cplx));
}

// (-1)^(p0+p1): the shift between the FFT index origin and x = -L.
inline double parity(const Grid& g, std::size_t idx) {
  auto p = g.unflat(idx);
  return ((p[0] + p[1]) & 1) ? -1.0 : 1.0;
}

}  // namespace

Grid::Grid(int dim, double half_length, int points_per_axis)
    : dim_(dim), L_(half_length), N_(points_per_axis) {
  if (dim != 1 && dim != 2) throw ConfigError("grid dim must be 1 or 2");
  if (!(half_length > 0.0) || !std::isfinite(half_length))
    throw ConfigError("grid half_length must be positive");
  if (points_per_axis < 8 || !is_power_of_two(points_per_axis))
    throw ConfigError("grid points_per_axis must be a power of two >= 8");
  size_ = dim == 1 ? static_cast<std::size_t>(N_) : static_cast<std::size_t>(N_) * N_;
}

double Grid::cell_volume() const noexcept { return std::pow(spacing(), dim_); }
double Grid::box_volume() const noexcept { return std::pow(2.0 * L_, dim_); }

Vec Grid::point(std::size_t idx) const noexcept {
  auto p = unflat(idx);
  double h = spacing();
  Vec x{-L_ + p[0] * h, 0.0};
  if (dim_ == 2) x[1] = -L_ + p[1] * h;
  return x;
}

std::array<int, 2> Grid::mode(std::size_t idx) const noexcept {
  auto p = unflat(idx);
  return {mode_index(p[0]), dim_ == 2 ? mode_index(p[1]) : 0};
}

Vec Grid::frequency(std::size_t idx) const noexcept {
  auto m = mode(idx);
  double dk = frequency_step();
  return {dk * m[0], dk * m[1]};
}

std::size_t Grid::index_of_mode(int m0, int m1) const {
  auto wrap = [&](int m) {
    if (m < -N_ / 2 || m >= N_ / 2) throw ConfigError("mode index outside lattice");
    return m < 0 ? m + N_ : m;
  };
  return dim_ == 1 ? flat(wrap(m0)) : flat(wrap(m0), wrap(m1));
}

// ---------------------------------------------------------------------------

StateField::StateField(const Grid& grid, double time)
    : grid_(grid), values_(grid.size(), cplx(0.0)), time_(time) {}

StateField::StateField(const Grid& grid, std::vector<cplx> values, double time)
    : grid_(grid), values_(std::move(values)), time_(time) {
  if (values_.size() != grid_.size()) throw ConfigError("field length does not match grid");
}

StateField StateField::sample(const Grid& grid, const std::function<cplx(const Vec&)>& f,
                              double time) {
  StateField out(grid, time);
  for (std::size_t i = 0; i < grid.size(); ++i) out.values_[i] = f(grid.point(i));
  return out;
}

StateField StateField::plane_wave(const Grid& grid, int m0, int m1, double time) {
  double dk = grid.frequency_step();
  Vec k{dk * m0, grid.dim() == 2 ? dk * m1 : 0.0};
  return sample(grid, [&](const Vec& x) { return std::exp(cplx(0.0, dot(k, x))); }, time);
}

StateField StateField::random(const Grid& grid, unsigned seed, double time) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  StateField out(grid, time);
  for (auto& v : out.values_) v = cplx(nd(rng), nd(rng));
  return out;
}

bool StateField::is_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](const cplx& z) {
    return std::isfinite(z.real()) && std::isfinite(z.imag());
  });
}

void StateField::require_finite(const char* where) const {
  if (!is_finite()) throw ComputationError(std::string(where) + ": non-finite field values");
}

void require_same_grid(const Grid& a, const Grid& b, const char* where) {
  if (!(a == b)) throw ConfigError(std::string(where) + ": grid mismatch");
}

StateField& StateField::operator+=(const StateField& o) {
  require_same_grid(grid_, o.grid_, "field +=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += o.values_[i];
  return *this;
}

StateField& StateField::operator-=(const StateField& o) {
  require_same_grid(grid_, o.grid_, "field -=");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= o.values_[i];
  return *this;
}

StateField& StateField::operator*=(cplx s) {
  for (auto& v : values_) v *= s;
  return *this;
}

StateField& StateField::axpy(cplx s, const StateField& o) {
  require_same_grid(grid_, o.grid_, "field axpy");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += s * o.values_[i];
  return *this;
}

StateField StateField::conj() const {
  StateField out(*this);
  for (auto& v : out.values_) v = std::conj(v);
  return out;
}

StateField StateField::times(const StateField& o) const {
  require_same_grid(grid_, o.grid_, "field product");
  StateField out(*this);
  for (std::size_t i = 0; i < values_.size(); ++i) out.values_[i] *= o.values_[i];
  return out;
}

StateField operator+(StateField a, const StateField& b) { return a += b; }
StateField operator-(StateField a, const StateField& b) { return a -= b; }
StateField operator*(cplx s, StateField a) { return a *= s; }

// ---------------------------------------------------------------------------

Spectrum::Spectrum(const Grid& grid) : grid_(grid), c_(grid.size(), cplx(0.0)) {}

Spectrum::Spectrum(const Grid& grid, std::vector<cplx> coeffs)
    : grid_(grid), c_(std::move(coeffs)) {
  if (c_.size() != grid_.size()) throw ConfigError("spectrum length does not match grid");
}

Spectrum forward_transform(const StateField& f) {
  const Grid& g = f.grid();
  if (f.size() != g.size()) throw ConfigError("forward_transform: size mismatch");
  std::vector<cplx> data(f.values().begin(), f.values().end());
  run(plans_for(g.dim(), g.points_per_axis()).fwd, data);
  double inv = 1.0 / static_cast<double>(g.size());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] *= parity(g, i) * inv;
  return Spectrum(g, std::move(data));
}

StateField inverse_transform(const Spectrum& s, double time) {
  const Grid& g = s.grid();
  std::vector<cplx> data(s.coeffs().begin(), s.coeffs().end());
  for (std::size_t i = 0; i < data.size(); ++i) data[i] *= parity(g, i);
  run(plans_for(g.dim(), g.points_per_axis()).bwd, data);
  return StateField(g, std::move(data), time);
}

double l2_norm(const StateField& f) {
  double acc = 0.0;
  for (const auto& v : f.values()) acc += std::norm(v);
  return std::sqrt(acc * f.grid().cell_volume());
}

cplx inner(const StateField& f, const StateField& g) {
  require_same_grid(f.grid(), g.grid(), "inner");
  cplx acc = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) acc += f[i] * std::conj(g[i]);
  return acc * f.grid().cell_volume();
}

double max_abs(const StateField& f) {
  double m = 0.0;
  for (const auto& v : f.values()) m = std::max(m, std::abs(v));
  return m;
}

double sobolev_norm(const Spectrum& c, double s) {
  if (s < -10.0 || s > 10.0) throw ConfigError("sobolev_norm: s outside [-10, 10]");
  const Grid& g = c.grid();
  double acc = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    Vec k = g.frequency(i);
    acc += std::pow(1.0 + dot(k, k), s) * std::norm(c[i]);
  }
  if (!std::isfinite(acc)) throw ComputationError("sobolev_norm: non-finite values");
  return std::sqrt(acc * c.norm_weight());
}

double sobolev_norm(const StateField& f, double s) {
  f.require_finite("sobolev_norm");
  return sobolev_norm(forward_transform(f), s);
}

void apply_multiplier_inplace(Spectrum& c, const std::function<cplx(const Vec&)>& m) {
  const Grid& g = c.grid();
  for (std::size_t i = 0; i < g.size(); ++i) c[i] *= m(g.frequency(i));
}

StateField apply_multiplier(const StateField& f, const std::function<cplx(const Vec&)>& m) {
  Spectrum c = forward_transform(f);
  apply_multiplier_inplace(c, m);
  return inverse_transform(c, f.time());
}

StateField partial(const StateField& f, int axis) {
  const Grid& g = f.grid();
  if (axis < 0 || axis >= g.dim()) throw ConfigError("partial: bad axis");
  Spectrum c = forward_transform(f);
  for (std::size_t i = 0; i < g.size(); ++i) {
    auto p = g.unflat(i);
    if (g.is_nyquist(p[axis])) {
      c[i] = 0.0;
    } else {
      c[i] *= cplx(0.0, g.frequency(i)[axis]);
    }
  }
  return inverse_transform(c, f.time());
}

StateField second_partial(const StateField& f, int a, int b) {
  const Grid& g = f.grid();
  if (a < 0 || a >= g.dim() || b < 0 || b >= g.dim()) throw ConfigError("second_partial: bad axis");
  if (a != b) return partial(partial(f, a), b);
  Spectrum c = forward_transform(f);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double k = g.frequency(i)[a];
    c[i] *= -k * k;
  }
  return inverse_transform(c, f.time());
}

StateField laplacian(const StateField& f) {
  return apply_multiplier(f, [](const Vec& k) { return cplx(-dot(k, k)); });
}

StateField bessel_potential(const StateField& f, double s) {
  return apply_multiplier(f, [s](const Vec& k) { return cplx(std::pow(1.0 + dot(k, k), 0.5 * s)); });
}

// ---------------------------------------------------------------------------

double periodic_offset(double d, double L) {
  double w = 2.0 * L;
  d = std::fmod(d + L, w);
  if (d < 0) d += w;
  return d - L;
}

CubePartition::CubePartition(const Grid& grid, double side) : grid_(grid), side_(side) {
  if (!(side > 0.0)) throw ConfigError("cube side must be positive");
  double per = 2.0 * grid.half_length() / side;
  per_axis_ = static_cast<int>(std::lround(per));
  if (per_axis_ < 1 || std::abs(per - per_axis_) > 1e-9)
    throw ConfigError("cube side must divide the box length 2L");
  int dim = grid.dim();
  std::size_t ncubes = dim == 1 ? per_axis_ : static_cast<std::size_t>(per_axis_) * per_axis_;
  cubes_.resize(ncubes);
  double L = grid.half_length();
  for (std::size_t c = 0; c < ncubes; ++c) {
    int a = dim == 1 ? static_cast<int>(c) : static_cast<int>(c / per_axis_);
    int b = dim == 1 ? 0 : static_cast<int>(c % per_axis_);
    Cube& q = cubes_[c];
    double lo0 = -L + a * side, lo1 = dim == 2 ? -L + b * side : 0.0;
    q.index = {static_cast<int>(std::lround(lo0 / side)),
               dim == 2 ? static_cast<int>(std::lround(lo1 / side)) : 0};
    q.center = {lo0 + 0.5 * side, dim == 2 ? lo1 + 0.5 * side : 0.0};
  }
  owner_.resize(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::size_t c = locate(grid.point(i));
    owner_[i] = c;
    cubes_[c].points.push_back(i);
  }
  // A double only reaches the 3^dim cubes around the owner.
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Vec x = grid.point(i);
    std::size_t own = owner_[i];
    int a0 = dim == 1 ? static_cast<int>(own) : static_cast<int>(own / per_axis_);
    int b0 = dim == 1 ? 0 : static_cast<int>(own % per_axis_);
    std::vector<std::size_t> seen;
    for (int da = -1; da <= 1; ++da) {
      for (int db = (dim == 2 ? -1 : 0); db <= (dim == 2 ? 1 : 0); ++db) {
        int a = ((a0 + da) % per_axis_ + per_axis_) % per_axis_;
        int b = ((b0 + db) % per_axis_ + per_axis_) % per_axis_;
        std::size_t c = dim == 1 ? a : static_cast<std::size_t>(a) * per_axis_ + b;
        if (std::find(seen.begin(), seen.end(), c) != seen.end()) continue;
        seen.push_back(c);
        bool in = true;
        for (int d = 0; d < dim; ++d)
          in = in && std::abs(periodic_offset(x[d] - cubes_[c].center[d], L)) < side - 1e-12;
        if (in) cubes_[c].double_points.push_back(i);
      }
    }
  }
  for (auto& q : cubes_) std::sort(q.double_points.begin(), q.double_points.end());
}

std::size_t CubePartition::locate(const Vec& x) const {
  double L = grid_.half_length();
  auto axis_index = [&](double v) {
    double u = periodic_offset(v, L) + L;
    int a = static_cast<int>(std::floor(u / side_ + 1e-12));
    return std::clamp(a, 0, per_axis_ - 1);
  };
  int a = axis_index(x[0]);
  if (grid_.dim() == 1) return static_cast<std::size_t>(a);
  return static_cast<std::size_t>(a) * per_axis_ + axis_index(x[1]);
}

// ---------------------------------------------------------------------------

void Trajectory::push(StateField f) {
  if (!frames_.empty()) {
    require_same_grid(frames_.front().grid(), f.grid(), "trajectory");
    double expect = frames_.back().time() + dt_;
    if (!(f.time() > frames_.back().time()) ||
        std::abs(f.time() - expect) > 1e-9 * std::max(1.0, std::abs(expect)))
      throw ConfigError("trajectory frames must be uniformly spaced by dt");
  }
  frames_.push_back(std::move(f));
}

double Trajectory::horizon() const noexcept {
  if (frames_.empty()) return 0.0;
  return frames_.back().time() - frames_.front().time();
}

double trapezoid_to(const std::vector<double>& samples, double dt, double T) {
  if (samples.empty()) throw ConfigError("trapezoid: no samples");
  if (samples.size() == 1 || T <= 0.0) return 0.0;
  double steps = T / dt;
  auto n = static_cast<std::size_t>(std::floor(steps + 1e-9));
  if (n >= samples.size() - 1) {
    if (steps > static_cast<double>(samples.size() - 1) + 1e-9)
      throw ConfigError("trapezoid: T beyond trajectory horizon");
    n = samples.size() - 1;
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += 0.5 * dt * (samples[i] + samples[i + 1]);
  double frac = steps - static_cast<double>(n);
  if (frac > 1e-9 && n + 1 < samples.size()) {
    double end = samples[n] + frac * (samples[n + 1] - samples[n]);
    acc += 0.5 * frac * dt * (samples[n] + end);
  }
  return acc;
}

std::vector<double> cube_space_time_norms(const Trajectory& tr, const CubePartition& part,
                                          double T) {
  if (tr.empty()) throw ConfigError("triple norm: empty trajectory");
  if (T > tr.horizon() + 1e-9 * std::max(1.0, T)) throw ConfigError("triple norm: T beyond horizon");
  require_same_grid(tr[0].grid(), part.grid(), "triple norm");
  const auto& cubes = part.cubes();
  double w = part.grid().cell_volume();
  std::vector<std::vector<double>> per_cube(cubes.size(), std::vector<double>(tr.size()));
  for (std::size_t f = 0; f < tr.size(); ++f) {
    const StateField& u = tr[f];
    for (std::size_t c = 0; c < cubes.size(); ++c) {
      double acc = 0.0;
      for (auto i : cubes[c].points) acc += std::norm(u[i]);
      per_cube[c][f] = acc * w;
    }
  }
  std::vector<double> out(cubes.size());
  for (std::size_t c = 0; c < cubes.size(); ++c)
    out[c] = std::sqrt(std::max(0.0, trapezoid_to(per_cube[c], tr.dt(), T)));
  return out;
}

double triple_norm_sup(const Trajectory& tr, const CubePartition& part, double T) {
  auto v = cube_space_time_norms(tr, part, T);
  return *std::max_element(v.begin(), v.end());
}

double triple_norm_sum(const Trajectory& tr, const CubePartition& part, double T) {
  auto v = cube_space_time_norms(tr, part, T);
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace qls
