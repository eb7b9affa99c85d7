#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace heapguard {


struct CliConfig {
  std::string program_path;
  std::optional<std::string> typedb_path;
  /// A file with one integer per line, or "-" for interactive prompting.
  std::optional<std::string> inputs;
  std::uint64_t heap_base = 0x2088010;
  bool landmark_enabled = true;
  bool sensitive_at_start = false;
  std::size_t snapshot_cap = 16;
  std::optional<std::set<std::string>> snapshot_fns;
  std::uint64_t step_budget = 1'000'000;
  std::uint64_t impact_budget = 100'000;
  std::int64_t impact_default_input = 0;
  std::uint32_t max_attempts = 8;
  bool report_all_faults = false;
  bool json = false;
  std::optional<std::string> dump_slice_path;
};

namespace exit_code {
inline constexpr int kClean = 0;
inline constexpr int kRuntime = 1;
inline constexpr int kUsage = 2;
}  // namespace exit_code

/// Parses one integer per line; blank lines and `#` comments are skipped.
/// Throws Error(ParseError).
std::vector<std::int64_t> parse_inputs(const std::string& text);

/// Full command-line entry point. Session lines go to `out`, diagnostics
/// and interactive prompts to `err`; interactive input is read from `in`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
            std::istream& in);

/// Runs an already-parsed configuration.
int run_config(const CliConfig& config, std::ostream& out, std::ostream& err, std::istream& in);

}  // namespace heapguard
