#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tsn::cli {

/// Runs the tsn command line with argv[1..] in `args`. Returns 0 on success,
/// 2 on a usage error (usage text on err) and 1 on a runtime error.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tsn::cli
