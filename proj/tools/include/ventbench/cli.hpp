#pragma once

#include <iosfwd>

namespace ventbench {

/// Parses the command line, runs the selected stage and returns the process
/// exit code. Errors are reported on err as a single "error[kind]: ..." line.
int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out,
                       std::ostream& err);

}  // namespace ventbench
