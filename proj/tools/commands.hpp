#pragma once

#include <ostream>

namespace visita::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;

/// Parses argv and runs one subcommand. Exactly one JSON document is written
/// to `out`; diagnostics and human tables go to `err` unless a file is named.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace visita::cli
