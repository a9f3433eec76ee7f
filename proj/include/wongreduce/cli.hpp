#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

namespace wongreduce::cli {

inline constexpr const char* kToolName = "wong-reduce";
inline constexpr const char* kToolVersion = "0.1.0";

/// Exit codes of `run`.
enum ExitCode : int { kOk = 0, kFailure = 1, kNoConvergence = 2 };

struct RunRequest {
  std::string subcommand;
  std::string config_path;
  std::optional<std::string> out_dir;  ///< overrides the config's "out"
  std::optional<std::uint64_t> seed;   ///< overrides the config's "seed"
};

/// Subcommands: geometry, integrate, equilibria, lattice-geometry,
/// lattice-integrate, lattice-equilibria, report.
bool known_subcommand(const std::string& name);

/// Fills defaults and rejects unknown keys or mistyped values (ConfigInvalid).
/// A run manifest is accepted in place of a config; its "config" entry is used.
nlohmann::json resolve_config(const std::string& subcommand, const nlohmann::json& raw, const std::string& path);

/// Runs one subcommand, writing outputs and manifest.json into the output directory.
int run(const RunRequest& request, std::ostream& log);

/// Stable 64-bit FNV-1a digest of a JSON document, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// Writes `text` to `path` via a temporary file and rename.
void write_atomic(const std::string& path, const std::string& text);

}  // namespace wongreduce::cli
