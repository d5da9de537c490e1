#pragma once

#include <iosfwd>

namespace rpl {

enum ExitCode : int {
    kExitOk = 0,
    kExitInputError = 1,
    kExitNonConvergence = 2,
    kExitInvariantFailure = 3,
};

/// Entry point of the `rpl` tool. Reports go to `out` unless --out names a file;
/// diagnostics and warnings go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rpl
