#pragma once

#include <nlohmann/json_fwd.hpp>

#include <ostream>
#include <stdexcept>
#include <string>

namespace climeco {

inline constexpr const char* kVersion = "1.0.0";

/// Invalid or incomplete configuration; maps to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Runs one pipeline stage from a JSON config file. Outputs are written to
/// temporaries and renamed on success; a manifest JSON with input hashes,
/// seed, version and wall time lands next to the outputs. Returns the
/// process exit code (0 ok, 1 runtime failure, 2 invalid config).
int run_stage(const std::string& stage, const std::string& config_path, std::ostream& log);

/// `${VAR}` expansion for path fields (environment overrides for paths only).
std::string expand_path(const std::string& path);

} // namespace climeco
