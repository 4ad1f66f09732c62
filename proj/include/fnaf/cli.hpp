#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "fnaf/error.hpp"
#include "fnaf/recon.hpp"

namespace fnaf::cli {

/// 1 for configuration errors, 2 for data errors, 3 for numeric errors.
int exit_code(ErrorKind kind);

/// Run configuration with one top-level seed. Every section is optional and
/// validated by the subcommand that needs it.
struct RunConfig {
    std::uint64_t seed = 0;
    std::filesystem::path out = "runs";
    nlohmann::json sections = nlohmann::json::object();

    /// Canonical form the run directory hash is computed from.
    [[nodiscard]] nlohmann::ordered_json canonical() const;
    /// out / "run-<16 hex digits of the canonical hash>"
    [[nodiscard]] std::filesystem::path run_dir() const;
};

/// Parses a JSON config; `out` and `seed` overrides apply before hashing.
RunConfig parse_config(const std::string& text, std::optional<std::uint64_t> seed_override = {},
                       std::optional<std::filesystem::path> out_override = {});
RunConfig load_config(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {},
                      std::optional<std::filesystem::path> out_override = {});

/// Entry point of the fnafctl tool. Never throws; returns the exit code.
int run(int argc, char** argv);

} // namespace fnaf::cli
