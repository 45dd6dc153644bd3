#pragma once

#include <ostream>

namespace nptraj {

// Entry point for the `nptraj` tool. Returns the process exit code; writes
// reports to `out` and diagnostics to `err` only on failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nptraj
