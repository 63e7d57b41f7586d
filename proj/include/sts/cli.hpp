#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace sts::cli {

inline constexpr const char* kVersion = "0.3.0";

enum ExitCode : int { kOk = 0, kDataError = 1, kConfigError = 2, kNumericError = 3 };

/// Runs one command line (args[0] is the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

}  // namespace sts::cli
