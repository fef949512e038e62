#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace ragit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitBackend = 2;

/// Entry point behind the `ragit` binary. `args[0]` is the program name.
/// Never throws; errors are reported on `err` and mapped to exit codes.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string version();

}  // namespace ragit::cli
