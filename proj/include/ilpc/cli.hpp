#pragma once

#include <iosfwd>

namespace ilpc {

/// Entry point of the `ilpc` command. Returns 0 on success, 2 on usage
/// errors (message on `err`) and 1 on runtime failures.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ilpc
