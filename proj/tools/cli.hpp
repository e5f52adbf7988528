#pragma once

#include <iosfwd>

namespace ldc::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kDataError = 2,
    kCheckFailed = 3,
};

/// Runs one subcommand. JSON lines go to `out`, human-readable text to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ldc::cli
