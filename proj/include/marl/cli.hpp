#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace marl {

/// Entry point of the `marl` command. args[0] is the program name. On failure
/// writes one JSON object {"error": code, "message": text} to `err` and returns
/// nonzero: 2 for usage errors, 1 for everything else.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace marl
