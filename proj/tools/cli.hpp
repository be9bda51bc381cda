#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

// Runs one command. `args` excludes the program name. JSON goes to `out`,
// progress and diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fan::cli
