#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eddi {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// Subcommands: train, acquire, experiment, inpaint, oracle-check, serve.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eddi
