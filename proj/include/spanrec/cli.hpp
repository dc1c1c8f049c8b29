#pragma once

#include <string>
#include <vector>

namespace spanrec {

// Full command-line entry point. Returns the process exit code:
//   0  success
//   1  validation or audit failure (including training divergence)
//   2  I/O, parse, or command-line errors
int run_cli(int argc, const char* const* argv);

// Test convenience: args without the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace spanrec
