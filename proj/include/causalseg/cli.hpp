#pragma once

#include <ostream>

namespace causalseg {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUserError = 2;
inline constexpr int kExitInternalError = 3;

/// Entry point shared by the causalseg binary and the tests. Subcommands:
/// train, eval, predict, visualize, gen-synthetic.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace causalseg
