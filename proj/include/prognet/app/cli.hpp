#pragma once

#include <iosfwd>

namespace prognet::app {

// Default CIFAR-10 directory when neither --cifar10 nor --synthetic is given.
inline constexpr const char* kDataDirEnv = "PROGNET_DATA_DIR";

// Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace prognet::app
