#pragma once

#include <ostream>

namespace tagsync {

enum ExitCode : int {
    kExitOk = 0,
    kExitNotIdentified = 1,
    kExitUsage = 2,
    kExitIo = 3,
};

/// Entry point of the `tagsync` tool with injectable streams for testing.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace tagsync
