#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "heapguard/detector.hpp"
#include "heapguard/heap.hpp"

namespace heapguard {

struct TableEvent {
  HeapEvent change;
};

struct SnapshotEvent {
  std::string call_path;
  Seq taken_at = 0;
};

struct PrintEvent {
  std::int64_t value = 0;
};

struct ReportEvent {
  CorruptionReport report;
};

/// Emitted when a corruption is judged harmless and execution continues.
struct ContinueEvent {
  Seq fault_seq = 0;
  std::string site;
  bool budget_exhausted = false;
};

struct RestoreEvent {
  std::string call_path;
  Seq snapshot_seq = 0;
  Seq fault_seq = 0;
  std::optional<std::int64_t> bad_value;
  std::string input_site;
};

struct GoodInputEvent {};

struct DumpEvent {
  std::vector<std::pair<Address, std::uint64_t>> free_table;
  std::vector<std::pair<Address, std::uint64_t>> allocation_table;
};

using Event = std::variant<TableEvent, SnapshotEvent, PrintEvent, ReportEvent, ContinueEvent,
                           RestoreEvent, GoodInputEvent, DumpEvent>;

enum class OutputFormat { Text, Json };

/// Text lines (one event may span several lines, e.g. the table dump) or a
/// single-line JSON object. No trailing newline.
std::string render_report(const Event& event, OutputFormat format);

DumpEvent make_dump(const Heap& heap);

}  // namespace heapguard
