#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace materia::cli {

/// Runs the materia command line. Returns the process exit code:
/// 0 success, 1 validation or usage error, 2 runtime failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct CommandInfo {
    std::string path;                // e.g. "review export"
    std::vector<std::string> flags;  // long flag names, e.g. "--store"
};

/// Every subcommand with the flags it accepts.
std::vector<CommandInfo> list_commands();

}  // namespace materia::cli
