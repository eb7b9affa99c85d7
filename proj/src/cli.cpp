#include "heapguard/cli.hpp"

#include <fstream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "heapguard/error.hpp"
#include "heapguard/events.hpp"
#include "heapguard/recovery.hpp"
#include "heapguard/typedb.hpp"

namespace heapguard {

namespace {

std::optional<std::string> slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

bool is_usage_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError:
    case ErrorCode::LinkError:
    case ErrorCode::ValidationError:
    case ErrorCode::DuplicateType:
    case ErrorCode::OverlappingFields:
    case ErrorCode::UnknownTypeInBinding:
    case ErrorCode::UnknownField:
      return true;
    default:
      return false;
  }
}

std::uint64_t parse_address(const std::string& text) {
  std::size_t used = 0;
  const std::uint64_t v = std::stoull(text, &used, 0);
  if (used != text.size()) throw std::invalid_argument(text);
  return v;
}

}  // namespace

std::vector<std::int64_t> parse_inputs(const std::string& text) {
  std::vector<std::int64_t> out;
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string token = line.substr(first, last - first + 1);
    try {
      std::size_t used = 0;
      const long long v = std::stoll(token, &used, 0);
      if (used != token.size()) throw std::invalid_argument(token);
      out.push_back(v);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError,
                  fmt::format("inputs line {}: '{}' is not an integer", lineno, token));
    }
  }
  return out;
}

int run_config(const CliConfig& config, std::ostream& out, std::ostream& err, std::istream& in) {
  if (config.heap_base % 16 != 0) {
    err << fmt::format("error: heap base 0x{:x} is not 16-aligned\n", config.heap_base);
    return exit_code::kUsage;
  }
  if (config.step_budget == 0 || config.impact_budget == 0 || config.max_attempts == 0) {
    err << "error: budgets and attempt limits must be positive\n";
    return exit_code::kUsage;
  }

  const auto program_text = slurp(config.program_path);
  if (!program_text) {
    err << fmt::format("error: cannot read program '{}'\n", config.program_path);
    return exit_code::kUsage;
  }
  std::optional<std::string> typedb_text;
  if (config.typedb_path) {
    typedb_text = slurp(*config.typedb_path);
    if (!typedb_text) {
      err << fmt::format("error: cannot read typedb '{}'\n", *config.typedb_path);
      return exit_code::kUsage;
    }
  }

  InputFeed feed;
  if (config.inputs && *config.inputs == "-") {
    feed = [&in, &err]() -> std::optional<std::int64_t> {
      while (true) {
        err << "input> " << std::flush;
        std::string line;
        if (!std::getline(in, line)) return std::nullopt;
        try {
          const auto values = parse_inputs(line);
          if (!values.empty()) return values.front();
        } catch (const Error& e) {
          err << e.what() << '\n';
        }
      }
    };
  } else if (config.inputs) {
    const auto text = slurp(*config.inputs);
    if (!text) {
      err << fmt::format("error: cannot read inputs '{}'\n", *config.inputs);
      return exit_code::kUsage;
    }
    try {
      feed = queue_feed(parse_inputs(*text));
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return exit_code::kUsage;
    }
  } else {
    feed = queue_feed({});
  }

  try {
    const Program program = parse_program(*program_text);
    std::optional<TypeDb> db;
    if (typedb_text) db = parse_typedb(*typedb_text);
    InterpConfig icfg;
    icfg.step_budget = config.step_budget;
    const Interpreter interp(program, db ? &*db : nullptr, icfg);

    SessionConfig scfg;
    scfg.heap.base = config.heap_base;
    scfg.heap.landmarks_enabled = config.landmark_enabled;
    scfg.sensitive_at_start = config.sensitive_at_start;
    scfg.snapshot_cap = config.snapshot_cap;
    scfg.snapshot_fns = config.snapshot_fns;
    scfg.impact.budget = config.impact_budget;
    scfg.impact.default_input = config.impact_default_input;
    scfg.report_all_faults = config.report_all_faults;
    scfg.max_attempts = config.max_attempts;

    const OutputFormat format = config.json ? OutputFormat::Json : OutputFormat::Text;
    const SessionOutcome outcome = orchestrate(interp, feed, scfg, [&](const Event& e) {
      out << render_report(e, format) << '\n';
    });
    out.flush();

    if (config.dump_slice_path) {
      std::ofstream f(*config.dump_slice_path);
      if (!f) {
        err << fmt::format("error: cannot write slice to '{}'\n", *config.dump_slice_path);
        return exit_code::kRuntime;
      }
      for (const std::string& line : outcome.slice_dump) f << line << '\n';
    }

    if (outcome.status == SessionOutcome::Status::Failed) {
      err << "error: " << outcome.error->what() << '\n';
      return exit_code::kRuntime;
    }
    return exit_code::kClean;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return is_usage_error(e.code()) ? exit_code::kUsage : exit_code::kRuntime;
  }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
            std::istream& in) {
  CLI::App app{"Heap corruption detection and recovery for micro-programs", "heapguard"};
  CliConfig config;
  std::string heap_base = "0x2088010";
  std::string format = "text";
  std::vector<std::string> snapshot_fns;
  bool no_landmarks = false;

  app.add_option("--program", config.program_path, "Micro-program source file")->required();
  app.add_option("--typedb", config.typedb_path, "Type database file");
  app.add_option("--inputs", config.inputs, "Input file (one integer per line) or - to prompt");
  app.add_option("--heap-base", heap_base, "Usable base of the first allocation");
  app.add_flag("--no-landmarks", no_landmarks, "Do not reserve landmark trailers");
  app.add_flag("--sensitive-at-start", config.sensitive_at_start,
               "Start with the sensitivity switch on");
  app.add_option("--snapshot-cap", config.snapshot_cap, "Snapshots kept besides main's entry")
      ->check(CLI::PositiveNumber);
  app.add_option("--snapshot-fns", snapshot_fns, "Only snapshot these functions")->delimiter(',');
  app.add_option("--step-budget", config.step_budget, "Instruction budget");
  app.add_option("--impact-budget", config.impact_budget, "Speculation step budget");
  app.add_option("--impact-default-input", config.impact_default_input,
                 "Input value used by speculation past the consumed inputs");
  app.add_option("--max-attempts", config.max_attempts, "Restores before giving up");
  app.add_flag("--report-all-faults", config.report_all_faults,
               "Keep running past the first fault and report every fault before restoring");
  app.add_option("--format", format, "Output format")->check(CLI::IsMember({"text", "json"}));
  app.add_option("--dump-slice", config.dump_slice_path,
                 "Write the backward slice of the first recovered fault to a file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_code::kClean : exit_code::kUsage;
  }
  try {
    config.heap_base = parse_address(heap_base);
  } catch (const std::exception&) {
    err << fmt::format("error: invalid heap base '{}'\n", heap_base);
    return exit_code::kUsage;
  }
  config.landmark_enabled = !no_landmarks;
  config.json = format == "json";
  if (!snapshot_fns.empty()) config.snapshot_fns.emplace(snapshot_fns.begin(), snapshot_fns.end());
  return run_config(config, out, err, in);
}

}  // namespace heapguard
