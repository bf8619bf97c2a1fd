#include "qls/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "qls/types.hpp"

namespace qls {

double EstimateReport::value(const std::string& key) const {
  auto it = values.find(key);
  if (it == values.end()) throw ConfigError("report " + name + " has no value " + key);
  return it->second;
}

const EstimateReport& EstimateReport::child(const std::string& n) const {
  for (const auto& c : children)
    if (c.name == n) return c;
  throw ConfigError("report " + name + " has no child " + n);
}

json EstimateReport::to_json() const {
  json j;
  j["name"] = name;
  j["pass"] = pass;
  j["values"] = json::object();
  for (const auto& [k, v] : values) j["values"][k] = v;
  if (!notes.empty()) j["notes"] = notes;
  if (!children.empty()) {
    j["children"] = json::array();
    for (const auto& c : children) j["children"].push_back(c.to_json());
  }
  return j;
}

json canonical(const json& j) {
  if (j.is_object()) {
    json out = json::object();
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = canonical(it.value());
    return out;
  }
  if (j.is_array()) {
    json out = json::array();
    for (const auto& v : j) out.push_back(canonical(v));
    return out;
  }
  if (j.is_number_float()) {
    double v = j.get<double>();
    if (!std::isfinite(v)) return std::isnan(v) ? json("nan") : json(v > 0 ? "inf" : "-inf");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12e", v);
    return std::strtod(buf, nullptr);
  }
  return j;
}

std::string dump_canonical(const json& j) { return canonical(j).dump(2) + "\n"; }

void write_json(const std::string& path, const json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open " + path + " for writing");
  os << dump_canonical(j);
}

double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("slope fit needs >= 2 paired samples");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) throw ComputationError("slope fit needs positive samples");
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  double den = n * sxx - sx * sx;
  if (den == 0.0) throw ComputationError("slope fit: degenerate abscissae");
  return (n * sxy - sx * sy) / den;
}

std::string format_vec(double a, double b) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "(%.6g, %.6g)", a, b);
  return buf;
}

}  // namespace qls
