#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace optnet {

/// Exit codes: 0 success, 1 bad input or failed check, 2 solver
/// NumericalFailure.
int cli_main(int argc, char** argv);
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace optnet
