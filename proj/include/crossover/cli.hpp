#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace crossover::cli {

enum ExitCode : int { ok = 0, failure = 1, parse_failure = 2, not_identifiable = 3, conditioning = 4 };

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace crossover::cli
