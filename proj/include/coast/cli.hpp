#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace coast::cli {

inline constexpr const char *kVersion = "0.1.0";

/// Runs one command line (without the program name) and returns the exit
/// status: 0 ok, 1 property failure, 2 input/format error, 3 numerical
/// rejection, 4 non-finite iterate.
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

}  // namespace coast::cli
