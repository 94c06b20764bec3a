#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pamt::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs the `pamt` command line. `args` excludes the program name.
/// Subcommands: generate, train, ablate, report, export-clusters.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pamt::cli
