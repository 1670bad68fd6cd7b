#pragma once

#include <ostream>

namespace gcfsr {

// Exit codes: 0 success, 2 usage or config error, 3 data, checkpoint or
// runtime failure.
constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

// gcfsr <command> ...: train, infer, sweep, sigma-hist, eval, serve, synth.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace gcfsr
