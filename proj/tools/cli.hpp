// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gfolds::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

// Runs one command; `args` excludes the program name. JSON results go to
// `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct OptionInfo {
  std::string command;  // e.g. "eval map"; empty for the top level
  std::string name;     // e.g. "--model"
  std::string description;
};

// Every option of every (sub)command, subcommands themselves included with
// an empty name.
std::vector<OptionInfo> option_inventory();

}  // namespace gfolds::cli
