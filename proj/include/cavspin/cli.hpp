#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cavspin/config.hpp"

namespace cavspin::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

inline constexpr const char* kVersion = "0.1.0";

struct Invocation {
  std::string command;  // simulate | sweep | fit | magnetometer | budget
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
};

/// Executes `command` and returns the data files written under out_dir.
/// Throws ConfigError, NumericalError, or std::invalid_argument.
std::vector<std::filesystem::path> run_command(const std::string& command, const RunConfig& config,
                                               const std::filesystem::path& out_dir);

/// Loads the config, runs the command, writes manifest.json (or error.json),
/// and maps failures to exit codes.
int run(const Invocation& invocation, std::ostream& out, std::ostream& err);

/// Command-line entry point.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cavspin::cli
