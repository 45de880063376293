#pragma once

#include <iosfwd>

namespace tgr::cli {

/// Exit statuses of run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitProtocol = 2;

/// Entry point of the `tgr` tool. argv[0] is the program name, argv[1] the subcommand.
/// Report and log output goes to `out` when a path is "-", diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace tgr::cli
