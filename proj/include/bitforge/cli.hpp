#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace bitforge::cli {

/// Parses argv and runs one verb. Progress goes to `out`; failures print a
/// single line `error: kind=<kind> message="<text>"` to `err` and return a
/// nonzero status:
///   2 usage, 3 config, 4 missing file, 5 diverged training, 1 anything else.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Convenience for tests.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bitforge::cli
