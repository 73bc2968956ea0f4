#pragma once

#include <ostream>

namespace adf::cli {

/// Runs the adf command line. Returns the process exit code.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace adf::cli
