#pragma once

#include <string>
#include <vector>

namespace hopqa {

// Exit codes: 0 success, 1 stage error, 2 configuration or usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitStage = 1;
inline constexpr int kExitConfig = 2;

int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace hopqa
