#pragma once

#include <string>
#include <vector>

namespace protex::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;

inline constexpr const char* kToolVersion = "0.1.0";

/// Entry point of the `protex` tool. Returns the process exit code.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);

}  // namespace protex::cli
