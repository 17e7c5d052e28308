#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ame::cli {

std::vector<std::string> verify_suites();

// Prints a pass/fail table; returns true when every check passed.
bool run_verify(const std::string& suite, bool quiet, std::ostream& out);

}  // namespace ame::cli
