#include "qls/psido.hpp"

#include <algorithm>
#include <mutex>
#include <shared_mutex>

namespace qls {

const char* to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::multiplier: return "multiplier";
    case OperatorKind::multiplication: return "multiplication";
    case OperatorKind::general: return "general";
  }
  return "?";
}

namespace {

bool close(cplx a, cplx b) {
  double scale = std::max({1.0, std::abs(a), std::abs(b)});
  return std::abs(a - b) <= 1e-13 * scale;
}

std::vector<Vec> probe_points(const Grid& g) {
  std::vector<Vec> xs;
  int n = g.points_per_axis();
  std::vector<int> ax{0, n / 7, n / 3, n / 2 - 1, n / 2, (2 * n) / 3 + 1, n - 1};
  for (int i : ax) {
    if (g.dim() == 1) {
      xs.push_back(g.point(g.flat(i)));
    } else {
      for (int j : ax) xs.push_back(g.point(g.flat(i, j)));
    }
  }
  return xs;
}

std::vector<Vec> probe_frequencies(const Grid& g) {
  int n = g.points_per_axis();
  std::vector<int> ms{0, 1, -1, 3, n / 4, -n / 4 + 1, n / 2 - 1, -n / 2};
  double dk = g.frequency_step();
  std::vector<Vec> ks;
  for (int a : ms) {
    if (g.dim() == 1) {
      ks.push_back({dk * a, 0.0});
    } else {
      for (int b : ms) ks.push_back({dk * a, dk * b});
    }
  }
  return ks;
}

}  // namespace

OperatorKind detect_kind(const Symbol& q, const Grid& g, double t) {
  if (q.dim() != g.dim()) throw ConfigError("symbol and grid dimensions differ");
  auto xs = probe_points(g);
  auto ks = probe_frequencies(g);
  bool x_free = true, xi_free = true;
  for (const auto& k : ks) {
    cplx ref = q(xs[0], k, t);
    for (const auto& x : xs) x_free = x_free && close(q(x, k, t), ref);
  }
  for (const auto& x : xs) {
    cplx ref = q(x, ks[0], t);
    for (const auto& k : ks) xi_free = xi_free && close(q(x, k, t), ref);
  }
  if (x_free) return OperatorKind::multiplier;
  if (xi_free) return OperatorKind::multiplication;
  return OperatorKind::general;
}

// Small cache of tabulations keyed by t, most recent first.
struct QuantizedOperator::Cache {
  std::shared_mutex mu;
  std::vector<std::pair<double, std::shared_ptr<const std::vector<cplx>>>> tables;
  static constexpr std::size_t capacity = 4;
};

QuantizedOperator::QuantizedOperator(Symbol q, const Grid& g)
    : q_(std::move(q)), grid_(g), kind_(detect_kind(q_, g)), cache_(std::make_shared<Cache>()) {}

QuantizedOperator::QuantizedOperator(Symbol q, const Grid& g, OperatorKind forced)
    : q_(std::move(q)), grid_(g), kind_(forced), cache_(std::make_shared<Cache>()) {
  if (q_.dim() != g.dim()) throw ConfigError("symbol and grid dimensions differ");
}

StateField QuantizedOperator::apply(const StateField& f, double t, Backend b) const {
  require_same_grid(grid_, f.grid(), "QuantizedOperator::apply");
  const Grid& g = grid_;
  if (kind_ == OperatorKind::multiplier) {
    Vec x0{0.0, 0.0};
    return apply_multiplier(f, [&](const Vec& k) { return q_(x0, k, t); });
  }
  if (kind_ == OperatorKind::multiplication) {
    StateField out(f);
    Vec k0{0.0, 0.0};
    for (std::size_t i = 0; i < g.size(); ++i) out[i] *= q_(g.point(i), k0, t);
    return out;
  }
  Spectrum c = forward_transform(f);
  std::vector<cplx> out(g.size());
  const std::size_t entries = g.size() * g.size();
  if (entries > max_table_entries) {
    if (b == Backend::openmp) {
      kernels::kn_direct_omp(q_, g, t, c.coeffs(), out);
    } else {
      kernels::kn_direct_serial(q_, g, t, c.coeffs(), out);
    }
    return StateField(g, std::move(out), f.time());
  }
  std::shared_ptr<const std::vector<cplx>> table;
  {
    std::shared_lock lock(cache_->mu);
    for (const auto& [key, tab] : cache_->tables)
      if (key == t) table = tab;
  }
  if (!table) {
    auto fresh = std::make_shared<std::vector<cplx>>(entries);
    if (b == Backend::openmp) {
      kernels::kn_tabulate_omp(q_, g, t, *fresh);
    } else {
      kernels::kn_tabulate_serial(q_, g, t, *fresh);
    }
    table = fresh;
    std::unique_lock lock(cache_->mu);
    auto& tabs = cache_->tables;
    tabs.insert(tabs.begin(), {t, table});
    if (tabs.size() > Cache::capacity) tabs.pop_back();
  }
  if (b == Backend::openmp) {
    kernels::kn_matvec_omp(*table, c.coeffs(), out);
  } else {
    kernels::kn_matvec_serial(*table, c.coeffs(), out);
  }
  return StateField(g, std::move(out), f.time());
}

StateField neumann_inverse_apply(const std::function<StateField(const StateField&)>& S,
                                 const StateField& f, double tol, int max_terms) {
  return neumann_inverse_apply<StateField>(S, f, tol, max_terms);
}

double estimate_operator_norm(const std::function<StateField(const StateField&)>& S, const Grid& g,
                              unsigned seed, int iterations) {
  return estimate_operator_norm<StateField>(S, [&] { return StateField::random(g, seed); }, iterations);
}

EstimateReport garding_check(const Symbol& q, const std::vector<StateField>& trials, double c_bound) {
  if (trials.empty()) throw ConfigError("garding_check: no trial fields");
  QuantizedOperator op(q, trials.front().grid());
  EstimateReport rep;
  rep.name = "garding";
  double min_ratio = std::numeric_limits<double>::infinity();
  std::size_t worst = 0;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& u = trials[i];
    double nu = l2_norm(u);
    if (nu == 0.0) continue;
    double r = std::real(inner(op.apply(u), u)) / (nu * nu);
    if (r < min_ratio) {
      min_ratio = r;
      worst = i;
    }
  }
  double C = std::max(0.0, -min_ratio);
  rep.values["min_ratio"] = min_ratio;
  rep.values["fitted_C"] = C;
  rep.values["c_bound"] = c_bound;
  rep.values["worst_trial"] = static_cast<double>(worst);
  rep.pass = std::isfinite(min_ratio) && C <= c_bound;
  return rep;
}

EstimateReport composition_remainder(const Symbol& a, const Symbol& b, const Grid& g,
                                     const std::vector<int>& modes) {
  if (modes.size() < 2) throw ConfigError("composition_remainder needs >= 2 probe modes");
  QuantizedOperator A(a, g), B(b, g), AB(a * b, g);
  EstimateReport rep;
  rep.name = "composition_remainder";
  std::vector<double> ks, rs;
  for (int m : modes) {
    StateField e = StateField::plane_wave(g, m, 0);
    StateField r = B.apply(A.apply(e)) - AB.apply(e);
    double k = std::abs(m) * g.frequency_step();
    double v = l2_norm(r) / l2_norm(e);
    ks.push_back(k);
    rs.push_back(std::max(v, 1e-300));
    rep.values["remainder_k" + std::to_string(m)] = v;
  }
  double slope = fit_loglog_slope(ks, rs);
  rep.values["growth_exponent"] = slope;
  rep.pass = slope < 0.5;
  return rep;
}

EstimateReport triple_norm_bound(const QuantizedOperator& op, const std::vector<Trajectory>& corpus,
                                 const CubePartition& part, double T) {
  EstimateReport rep;
  rep.name = "triple_norm_bound";
  double worst = 0.0;
  for (const auto& tr : corpus) {
    Trajectory img(tr.dt());
    for (const auto& f : tr.frames()) img.push(op.apply(f));
    double den = triple_norm_sup(tr, part, T);
    if (den == 0.0) continue;
    worst = std::max(worst, triple_norm_sup(img, part, T) / den);
  }
  rep.values["max_ratio"] = worst;
  rep.pass = std::isfinite(worst);
  return rep;
}

}  // namespace qls
