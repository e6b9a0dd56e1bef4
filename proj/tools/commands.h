#pragma once

#include <ostream>

namespace cap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

// Entry point of the `cap` tool. Failures print a single line
// "error code=<n> kind=<usage|data|numerical> message=<text>" to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cap::cli
