#pragma once

#include <ostream>

namespace gittins_lab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitNumerical = 2;
inline constexpr int kExitUsage = 64;

/// Parses argv (argv[0] is the program name) and runs one subcommand:
/// gittins index, mcs run, oracle solve, queue sim, bo run, profile.
/// The JSON summary goes to `out`; `--csv FILE` writes the CSV to FILE,
/// or to `out` in place of the JSON when FILE is "-".
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gittins_lab
