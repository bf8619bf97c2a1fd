#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "qls/report.hpp"

namespace qls {

struct RunOptions {
  std::string subcommand;   // rays, doi, linear, solve, limit, verify
  std::string config_path;  // empty: defaults only
  std::string out_dir;      // empty: QLS_OUT_DIR, then config output_dir, then ./qls_out
  int threads = 0;
  std::optional<std::uint64_t> seed;
  json overrides = json::object();  // merged over the config file before validation
};

// Defaults for every block; unknown keys in a user config are errors.
json default_config();
// Merges user over the defaults, checking keys and types. Throws ConfigError.
json resolve_config(const json& user);

// Exit codes: 0 success, 1 computation error or failed verification, 2 invalid config.
int run(const RunOptions& opt, std::ostream& log, std::ostream& err);

}  // namespace qls
