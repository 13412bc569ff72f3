#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sbi::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNoMatch = 3;

// Runs one command line. args[0] is the program name. Subcommands:
// keygen, enroll, tokenize, identify, attack-enroll, attack-distinguish,
// bench, inspect.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sbi::cli
