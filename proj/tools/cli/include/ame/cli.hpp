#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ame::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kValidationError = 1;
inline constexpr int kRuntimeError = 2;

// Runs the `ame` command line in-process. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ame::cli
