#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace rsfl::cli {

/// Raised for config schema violations; maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitPipeline = 2;
/// check-lemmas ran to completion but found violations.
inline constexpr int kExitViolations = 3;

const std::vector<std::string>& command_names();

/// Built-in defaults for one subcommand and system.
nlohmann::json default_config(const std::string& command, const std::string& system);

/// Applies "a.b.c=value" to `config`. The value is read as JSON when it
/// parses, else as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Rejects unknown keys and wrong types for `command`.
void validate_config(const std::string& command, const nlohmann::json& config);

/// Runs a validated config; returns the result document and sets `exit_code`.
nlohmann::json run_command(const std::string& command, const nlohmann::json& config, int& exit_code);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rsfl::cli
