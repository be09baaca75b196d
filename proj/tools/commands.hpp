#pragma once

// The hybridsize command line: one subcommand per pipeline stage, file-based
// handoff between stages.

#include "hybridsize/scenarios.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace hybridsize::cli {

/// Parses argv and runs one subcommand. Progress goes to `out`; a failure is
/// reported on `err` as one JSON object {"error": {"kind", "message"}}.
/// Returns the exit code: 0 on success, 2 for a usage error, 1 otherwise.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Scenario file: columns scenario,step,wind_ms,load_mw.
void write_scenarios(const std::filesystem::path& path,
                     std::span<const scenarios::Scenario> pool);
std::vector<scenarios::Scenario> read_scenarios(const std::filesystem::path& path);

}  // namespace hybridsize::cli
