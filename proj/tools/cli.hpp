#pragma once

#include <iosfwd>

namespace prorad {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitPartial = 2;
inline constexpr int kExitConfig = 3;

/// Entry point of the `prorad` command; returns the process exit code.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace prorad
