#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mc::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;  // domain error, one-line diagnostic on err
inline constexpr int kUsage = 2;    // bad arguments or unknown subcommand

// args excludes the program name.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace mc::cli
