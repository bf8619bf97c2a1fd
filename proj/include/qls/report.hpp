#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace qls {

using json = nlohmann::json;

// Measured constants versus claimed bounds for one check.
struct EstimateReport {
  std::string name;
  bool pass = false;
  std::map<std::string, double> values;
  std::map<std::string, std::string> notes;
  std::vector<EstimateReport> children;

  EstimateReport() = default;
  explicit EstimateReport(std::string n) : name(std::move(n)) {}

  double value(const std::string& key) const;
  const EstimateReport& child(const std::string& name) const;
  json to_json() const;
};

// Rounds every double to 12 significant digits so that dumps are stable
// under reassociation noise; object keys are already sorted.
json canonical(const json& j);
std::string dump_canonical(const json& j);
void write_json(const std::string& path, const json& j);

// Least-squares slope of log(y) against log(x).
double fit_loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

std::string format_vec(double a, double b);

}  // namespace qls
