#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fmhca::cli {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;  // verification failure or diverged training
inline constexpr int usage = 2;    // bad flags, bad config, unreadable files
}  // namespace exit_code

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fmhca::cli
