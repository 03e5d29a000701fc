#pragma once

#include <string>
#include <vector>

namespace envelope::cli {

inline constexpr const char* kToolVersion = "1.0.0";

/// Parses the command line, dispatches one subcommand, and prints a
/// one-line summary. Returns 0 on success, 1 on user error, 2 on
/// numerical failure.
int parse_and_run(int argc, char** argv);

/// Convenience overload; args excludes the program name.
int parse_and_run(const std::vector<std::string>& args);

/// Expands "start:stop:step" (inclusive of stop within rounding) or a
/// comma-separated list into values.
std::vector<double> parse_grid(const std::string& text);

} // namespace envelope::cli
