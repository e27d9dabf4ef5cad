#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace convseq::cli {

/// Runs one subcommand. `args` excludes the program name. Normal output goes to
/// `out`; logs, the resolved config and diagnostics go to `err`.
/// Returns 0 on success, 1 on runtime failure, 2 on usage or config errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace convseq::cli
