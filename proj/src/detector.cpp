#include "heapguard/detector.hpp"

namespace heapguard {

namespace {

const ChunkRecord* preceding_live(const Heap& heap, Address addr) {
  const ChunkRecord* best = nullptr;
  for (const ChunkRecord* rec : heap.live_records()) {
    if (rec->end() <= addr && (best == nullptr || rec->base > best->base)) best = rec;
  }
  return best;
}

std::optional<CorruptionReport> classify_access(const Heap& heap, Address addr, std::uint64_t len,
                                                const AccessSite& instr, AccessDirection dir) {
  if (len == 0) return std::nullopt;
  const auto hits = heap.intersecting(addr, len);
  const ChunkRecord* start_live = nullptr;
  const ChunkRecord* first_freed = nullptr;
  bool any_live = false;
  for (const ChunkRecord* rec : hits) {
    if (rec->live()) {
      any_live = true;
      if (addr >= rec->base && addr < rec->end()) start_live = rec;
    } else if (first_freed == nullptr) {
      first_freed = rec;
    }
  }
  const bool wraps = addr + len < addr;

  CorruptionReport report;
  report.instr = instr;
  report.direction = dir;
  report.access_addr = addr;
  report.access_len = len;

  if (!any_live && first_freed != nullptr) {
    report.kind = CorruptionKind::UseAfterFree;
    report.fault_addr = std::max(addr, first_freed->base);
    report.last_valid = report.fault_addr - 1;
    report.chunk = *first_freed;
    report.target_sensitive = first_freed->sensitive;
    return report;
  }
  if (start_live != nullptr && !wraps && addr + len <= start_live->end()) {
    return std::nullopt;
  }

  report.kind = CorruptionKind::InterChunk;
  if (start_live != nullptr) {
    report.fault_addr = start_live->end();
    report.chunk = *start_live;
  } else {
    report.fault_addr = addr;
    // Header, trailer or gap: blame the live chunk being run off the end
    // of, else the chunk whose footprint holds the first byte, else the
    // first chunk the range runs into.
    if (const ChunkRecord* before = preceding_live(heap, addr)) {
      report.chunk = *before;
    } else if (const ChunkRecord* owner = heap.footprint_owner(addr)) {
      report.chunk = *owner;
    } else if (!hits.empty()) {
      report.chunk = *hits.front();
    }
  }
  report.last_valid = report.fault_addr - 1;
  report.target_sensitive = report.chunk && report.chunk->sensitive;
  return report;
}

}  // namespace

std::string_view corruption_kind_name(CorruptionKind kind) noexcept {
  switch (kind) {
    case CorruptionKind::InterChunk: return "InterChunk";
    case CorruptionKind::IntraChunk: return "IntraChunk";
    case CorruptionKind::UseAfterFree: return "UseAfterFree";
    case CorruptionKind::LandmarkViolation: return "LandmarkViolation";
  }
  return "?";
}

std::optional<CorruptionReport> check_store(const Heap& heap, const TypeDb* db, Address addr,
                                            std::uint64_t len, const std::optional<FieldRef>& prov,
                                            const AccessSite& instr) {
  if (auto report = classify_access(heap, addr, len, instr, AccessDirection::Write)) {
    return report;
  }
  if (db == nullptr || !prov || len == 0) return std::nullopt;

  const Classification where = heap.classify(addr, len);
  const ChunkRecord* rec = where.record;
  if (rec == nullptr || !rec->type_id || *rec->type_id != prov->type) return std::nullopt;
  const TypeDef* type = db->find(*rec->type_id);
  if (type == nullptr) return std::nullopt;

  const std::uint64_t offset = addr - rec->base;
  if (!crosses_field(*type, prov->field, offset, len)) return std::nullopt;

  const FieldDef* field = type->field(prov->field);
  CorruptionReport report;
  report.kind = CorruptionKind::IntraChunk;
  report.instr = instr;
  report.direction = AccessDirection::Write;
  report.access_addr = addr;
  report.access_len = len;
  report.chunk = *rec;
  report.target_sensitive = rec->sensitive;
  report.field = prov;
  // First byte outside the field's extent.
  report.fault_addr = offset < field->offset ? addr : rec->base + field->end();
  report.last_valid = report.fault_addr - 1;
  return report;
}

std::optional<CorruptionReport> check_load(const Heap& heap, Address addr, std::uint64_t width,
                                           const AccessSite& instr) {
  return classify_access(heap, addr, width, instr, AccessDirection::Read);
}

std::vector<CorruptionReport> scan_landmarks(const Heap& heap) {
  std::vector<CorruptionReport> out;
  for (const ChunkRecord* rec : heap.table(TableKind::Sensitive)) {
    if (!rec->has_landmark) continue;
    for (std::uint64_t i = 0; i < kTrailerSize; ++i) {
      const std::uint8_t expected = i < kLandmark.size() ? kLandmark[i] : 0;
      if (heap.byte_at(rec->trailer() + i) == expected) continue;
      CorruptionReport report;
      report.kind = CorruptionKind::LandmarkViolation;
      report.fault_addr = rec->trailer() + i;
      report.last_valid = rec->end() - 1;
      report.chunk = *rec;
      report.target_sensitive = true;
      report.access_addr = rec->trailer();
      report.access_len = kTrailerSize;
      out.push_back(std::move(report));
      break;
    }
  }
  return out;
}

}  // namespace heapguard
