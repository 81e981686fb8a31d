#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace prism::cli {

// Stable exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitBackend = 3;
inline constexpr int kExitConfig = 4;

// Entry point behind the `prism` binary; args excludes the program name.
// Documents go to --out when given, otherwise to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace prism::cli
