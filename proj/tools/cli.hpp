#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gbdtnas::cli {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kConfigError = 2, kOracleError = 3, kInvariantError = 4 };

// Runs one command. `args` excludes the program name. Diagnostics go to `err`,
// regular output to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace gbdtnas::cli
