#pragma once

#include <string>
#include <vector>

namespace fiberlay::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPrecondition = 3;
inline constexpr int kExitAssert = 4;

/// Entry point shared by the executable and the tests.
int run(const std::vector<std::string>& args);

std::vector<std::string> subcommands();

}  // namespace fiberlay::cli
