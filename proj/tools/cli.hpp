#pragma once

#include <string>
#include <vector>

namespace modelmon::cli {

enum ExitCode : int { kClean = 0, kError = 1, kViolations = 2, kUsage = 64 };

/// Runs one subcommand. Machine-readable output goes to stdout, logs and the
/// resolved configuration to stderr.
int dispatch(int argc, const char* const* argv);
int dispatch(const std::vector<std::string>& args);

}  // namespace modelmon::cli
