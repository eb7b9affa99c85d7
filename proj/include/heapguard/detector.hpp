#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "heapguard/heap.hpp"
#include "heapguard/program.hpp"
#include "heapguard/typedb.hpp"

namespace heapguard {

enum class CorruptionKind { InterChunk, IntraChunk, UseAfterFree, LandmarkViolation };
enum class AccessDirection { Read, Write };

std::string_view corruption_kind_name(CorruptionKind kind) noexcept;

/// The instruction instance performing an access.
struct AccessSite {
  Seq seq = 0;
  InstrRef where;
  std::string name;  // "fn:label"
};

struct CorruptionReport {
  CorruptionKind kind = CorruptionKind::InterChunk;
  Address fault_addr = 0;
  /// Last in-bounds byte before the fault; fault_addr - 1 by construction.
  Address last_valid = 0;
  AccessSite instr;
  std::optional<ChunkRecord> chunk;
  bool target_sensitive = false;
  AccessDirection direction = AccessDirection::Write;
  Address access_addr = 0;
  std::uint64_t access_len = 0;
  std::optional<FieldRef> field;

  /// Offset of the fault from the implicated chunk's usable base.
  std::optional<std::uint64_t> chunk_offset() const {
    if (!chunk) return std::nullopt;
    return fault_addr - chunk->base;
  }
};

/// Classifies one store. Priority: use-after-free, then inter-chunk, then
/// intra-chunk. Intra-chunk needs both a type-bound chunk and a field
/// provenance annotation naming that type.
std::optional<CorruptionReport> check_store(const Heap& heap, const TypeDb* db, Address addr,
                                            std::uint64_t len, const std::optional<FieldRef>& prov,
                                            const AccessSite& instr);

/// Like check_store without the intra-chunk check; direction is Read.
std::optional<CorruptionReport> check_load(const Heap& heap, Address addr, std::uint64_t width,
                                           const AccessSite& instr);

/// One LandmarkViolation per live sensitive chunk whose trailer differs
/// from landmark + zero pad.
std::vector<CorruptionReport> scan_landmarks(const Heap& heap);

}  // namespace heapguard
