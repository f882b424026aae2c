#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ehr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one ehrctl invocation (arguments exclude the program name).
/// 0 success, 1 operational failure, 2 usage error with the synopsis on `err`.
int execute(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err);

}  // namespace ehr::cli
