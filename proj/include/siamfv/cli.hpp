#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace siamfv::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kDomainError = 1;
inline constexpr int kUsageError = 2;

// Runs one subcommand. `args` excludes the program name. Errors are reported
// as a single "error: ..." line on `err`.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int main_entry(int argc, char** argv);

}  // namespace siamfv::cli
