#pragma once

#include "decompsens/error.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace decompsens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Environment variable holding the worker thread count (0 = all cores).
inline constexpr const char* kThreadsEnv = "DECOMPSENS_THREADS";

int exit_code_for(ErrorKind kind) noexcept;

/// Runs one command line (without the program name). Reports go to `out`;
/// failures are written to `err` as a single-line JSON record.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace decompsens::cli
