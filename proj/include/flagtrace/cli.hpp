#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace flagtrace::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kErrors = 1;
inline constexpr int kUsage = 2;
inline constexpr int kIoOrParse = 3;
inline constexpr int kWarnings = 4;

// Runs one command. args excludes the program name. Reports go to `out`,
// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flagtrace::cli
