#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace bytet5::cli {

inline constexpr const char* kToolkitVersion = "0.1.0";

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

// Runs one command. `args` excludes the program name. Primary output goes
// to `out`; the resolved-config log line and error JSON go to `err`.
// Config precedence, lowest first: built-in defaults, --config file,
// BYTET5_* variables from `envp`, --set key=value, subcommand flags.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, std::istream& in,
        char** envp = nullptr);

}  // namespace bytet5::cli
