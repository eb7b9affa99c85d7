#include "heapguard/events.hpp"

#include <fmt/format.h>

#include "json.hpp"

namespace heapguard {

namespace {

std::string hex(std::uint64_t v) { return fmt::format("0x{:x}", v); }

std::string pair_line(Address base, std::uint64_t size) {
  return fmt::format("(0x{:x}, 0x{:x})", base, size);
}

struct TextRenderer {
  std::string operator()(const TableEvent& e) const {
    switch (e.change.kind) {
      case HeapEvent::Kind::AllocInsert:
        return "[+] TA <- " + pair_line(e.change.base, e.change.size);
      case HeapEvent::Kind::AllocRemove:
        return "[+] TA -> " + pair_line(e.change.base, e.change.size);
      case HeapEvent::Kind::FreeInsert:
        return "[+] TF <- " + pair_line(e.change.base, e.change.size);
    }
    return {};
  }
  std::string operator()(const SnapshotEvent&) const {
    return "[+] Take a snapshot at the prologue of the function";
  }
  std::string operator()(const PrintEvent& e) const { return std::to_string(e.value); }
  std::string operator()(const ReportEvent& e) const {
    const CorruptionReport& r = e.report;
    switch (r.kind) {
      case CorruptionKind::InterChunk:
        return fmt::format("[!] heap overflow (0x{:x}, 0x{:x}) at {}", r.last_valid, r.fault_addr,
                           r.instr.name);
      case CorruptionKind::IntraChunk:
        return fmt::format("[!] intra-chunk overflow (0x{:x}, 0x{:x}) at {} field {}.{}",
                           r.last_valid, r.fault_addr, r.instr.name, r.field->type, r.field->field);
      case CorruptionKind::UseAfterFree:
        return fmt::format("[!] use after free (0x{:x}) at {}", r.fault_addr, r.instr.name);
      case CorruptionKind::LandmarkViolation:
        return fmt::format("[!] landmark corrupted (0x{:x}) after chunk {}", r.fault_addr,
                           pair_line(r.chunk->base, r.chunk->usable));
    }
    return {};
  }
  std::string operator()(const ContinueEvent&) const {
    return "[+] Corruption cannot reach sensitive memory. Continue.";
  }
  std::string operator()(const RestoreEvent&) const {
    return "[+] Still bad input which reduces heap overflow. Restore snapshot.";
  }
  std::string operator()(const GoodInputEvent&) const { return "[+] Good Input!"; }
  std::string operator()(const DumpEvent& e) const {
    std::string out = "\nFree table:\n";
    auto table = [&out](const std::vector<std::pair<Address, std::uint64_t>>& rows) {
      if (rows.empty()) out += "Empty\n";
      for (const auto& [base, size] : rows) out += pair_line(base, size) + "\n";
    };
    table(e.free_table);
    out += "\nAllocation table:\n";
    table(e.allocation_table);
    out.pop_back();
    return out;
  }
};

struct JsonRenderer {
  using json = nlohmann::json;

  static json chunk(const ChunkRecord& r) {
    return {{"base", hex(r.base)},
            {"size", hex(r.usable)},
            {"sensitive", r.sensitive},
            {"site", r.alloc_site},
            {"type", r.type_id ? json(*r.type_id) : json(nullptr)}};
  }
  static json rows(const std::vector<std::pair<Address, std::uint64_t>>& rows) {
    json out = json::array();
    for (const auto& [base, size] : rows) out.push_back({{"base", hex(base)}, {"size", hex(size)}});
    return out;
  }

  json operator()(const TableEvent& e) const {
    const char* op = e.change.kind == HeapEvent::Kind::AllocInsert   ? "TA<-"
                     : e.change.kind == HeapEvent::Kind::AllocRemove ? "TA->"
                                                                     : "TF<-";
    return {{"event", "table"}, {"op", op}, {"base", hex(e.change.base)}, {"size", hex(e.change.size)}};
  }
  json operator()(const SnapshotEvent& e) const {
    return {{"event", "snapshot"}, {"call_path", e.call_path}, {"seq", e.taken_at}};
  }
  json operator()(const PrintEvent& e) const { return {{"event", "print"}, {"value", e.value}}; }
  json operator()(const ReportEvent& e) const {
    const CorruptionReport& r = e.report;
    json j = {{"event", "report"},
              {"kind", corruption_kind_name(r.kind)},
              {"fault_addr", hex(r.fault_addr)},
              {"last_valid", hex(r.last_valid)},
              {"seq", r.instr.seq},
              {"label", r.instr.name},
              {"direction", r.direction == AccessDirection::Read ? "read" : "write"},
              {"target_sensitive", r.target_sensitive}};
    j["chunk"] = r.chunk ? chunk(*r.chunk) : json(nullptr);
    if (r.field) j["field"] = r.field->type + "." + r.field->field;
    return j;
  }
  json operator()(const ContinueEvent& e) const {
    return {{"event", "decision"},
            {"decision", "LogAndContinue"},
            {"seq", e.fault_seq},
            {"label", e.site},
            {"budget_exhausted", e.budget_exhausted}};
  }
  json operator()(const RestoreEvent& e) const {
    json j = {{"event", "restore"},
              {"decision", "Recover"},
              {"call_path", e.call_path},
              {"snapshot_seq", e.snapshot_seq},
              {"fault_seq", e.fault_seq}};
    j["bad_input"] = e.bad_value ? json(*e.bad_value) : json(nullptr);
    j["input_site"] = e.input_site;
    return j;
  }
  json operator()(const GoodInputEvent&) const { return {{"event", "good_input"}}; }
  json operator()(const DumpEvent& e) const {
    return {{"event", "tables"},
            {"free", rows(e.free_table)},
            {"allocation", rows(e.allocation_table)}};
  }
};

}  // namespace

std::string render_report(const Event& event, OutputFormat format) {
  if (format == OutputFormat::Text) return std::visit(TextRenderer{}, event);
  return std::visit(JsonRenderer{}, event).dump();
}

DumpEvent make_dump(const Heap& heap) {
  DumpEvent dump;
  for (const ChunkRecord* r : heap.table(TableKind::Free)) dump.free_table.emplace_back(r->base, r->usable);
  for (const ChunkRecord* r : heap.live_records()) dump.allocation_table.emplace_back(r->base, r->usable);
  return dump;
}

}  // namespace heapguard
