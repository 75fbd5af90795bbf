#pragma once

#include <string>
#include <vector>

namespace fsfc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNotConverged = 4;

// Dispatches `fit`, `predict`, `simulate` and `bench`. Returns the process
// exit code; diagnostics go to stderr as `error[CODE]: message`.
int run_command(const std::vector<std::string>& args);

}  // namespace fsfc
