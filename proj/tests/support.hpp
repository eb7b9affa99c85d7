#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "heapguard/cli.hpp"
#include "heapguard/program.hpp"
#include "heapguard/recovery.hpp"
#include "heapguard/typedb.hpp"

namespace heapguard::testing {

inline std::string programs_dir() { return HEAPGUARD_PROGRAMS_DIR; }

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::string bundled(const std::string& name) { return programs_dir() + "/" + name; }

inline Program load_program(const std::string& name) {
  return parse_program(read_file(bundled(name)));
}

inline std::vector<std::int64_t> load_inputs(const std::string& name) {
  return parse_inputs(read_file(bundled(name)));
}

struct CliRun {
  int code = 0;
  std::string out;
  std::string err;
};

inline CliRun run_cli_args(std::vector<std::string> args, const std::string& stdin_text = "") {
  args.insert(args.begin(), "heapguard");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  std::istringstream in(stdin_text);
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err, in);
  r.out = out.str();
  r.err = err.str();
  return r;
}

inline std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) lines.push_back(line);
  return lines;
}

/// A bundled scenario: program, optional typedb, inputs and extra flags.
struct Scenario {
  std::string name;
  std::string program;
  std::string typedb;
  std::string inputs;
  std::vector<std::string> flags;

  std::vector<std::string> args() const {
    std::vector<std::string> a = {"--program", bundled(program)};
    if (!typedb.empty()) {
      a.push_back("--typedb");
      a.push_back(bundled(typedb));
    }
    if (!inputs.empty()) {
      a.push_back("--inputs");
      a.push_back(bundled(inputs));
    }
    a.insert(a.end(), flags.begin(), flags.end());
    return a;
  }
};

inline std::vector<Scenario> bundled_scenarios() {
  return {
      {"off_by_one_recovery", "off_by_one.mp", "", "off_by_one.inputs",
       {"--sensitive-at-start", "--no-landmarks", "--report-all-faults"}},
      {"off_by_one_default", "off_by_one.mp", "", "off_by_one.inputs", {}},
      {"goaty", "goaty.mp", "goaty.tdb", "", {}},
      {"nullhttpd", "nullhttpd_mini.mp", "", "nullhttpd_mini.inputs", {}},
      {"decide_sensitive", "decide_sensitive.mp", "", "decide_sensitive.inputs", {}},
      {"decide_benign", "decide_benign.mp", "", "decide_benign.inputs", {}},
      {"decide_tainted_copy", "decide_tainted_copy.mp", "", "decide_tainted_copy.inputs", {}},
      {"calls", "calls.mp", "", "calls.inputs", {"--sensitive-at-start"}},
  };
}

}  // namespace heapguard::testing
