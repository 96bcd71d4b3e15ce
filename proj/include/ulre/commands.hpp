#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ulre {

inline constexpr std::string_view kCodeVersion = "ulre 1.0.0";

// Process exit codes of the command-line tool.
enum class ExitCode : int { ok = 0, config = 2, data = 3, numerical = 4 };

struct CommandOptions {
    std::filesystem::path config;
    std::filesystem::path out;
    std::optional<std::uint64_t> seed;  // overrides the config's `seed`
};

// Subcommand names in the order they are listed by --help.
const std::vector<std::string>& command_names();

// Config keys accepted by a subcommand; throws ConfigError for an unknown name.
const std::set<std::string>& command_keys(std::string_view name);

// Runs one subcommand. The config and every input file are validated before
// the output directory is touched. Every run writes manifest.json next to its
// outputs. Throws the library's error types on failure.
void run_command(std::string_view name, const CommandOptions& options, std::ostream& log);

// Maps an exception thrown by run_command to an exit code.
ExitCode exit_code_for(const std::exception& error) noexcept;

// run_command with errors reported on `err` and converted to an exit code.
int run_command_guarded(std::string_view name, const CommandOptions& options, std::ostream& log,
                        std::ostream& err);

}  // namespace ulre
