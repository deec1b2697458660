#pragma once

// Command-line front end. Every subcommand writes its outputs and a
// manifest.json under --out-dir. Exit codes: 0 success, 1 domain error
// (bad data, failed computation), 2 usage error.

#include <iosfwd>
#include <string>
#include <vector>

namespace fluoro::cli {

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Replaces `--config <file>` by the arguments the JSON file stands for,
/// appended after the command-line arguments so that they take precedence.
/// Keys map to long flag names; objects keyed by a subcommand name apply to
/// that subcommand; an "argv" array is inserted verbatim before the keys.
std::vector<std::string> expand_config(const std::vector<std::string>& args);

}  // namespace fluoro::cli
