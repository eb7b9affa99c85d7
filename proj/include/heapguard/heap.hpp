#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "heapguard/chunk.hpp"

namespace heapguard {

/// Global instruction-instance counter value; 0 means "no instance".
using Seq = std::uint64_t;

struct HeapConfig {
  /// Usable base of the first allocation. The image itself starts one
  /// header earlier so the first chunk header has somewhere to live.
  Address base = 0x2088010;
  std::uint64_t max_bytes = std::uint64_t{1} << 24;
  /// When false, sensitive chunks are tracked in the sensitive table but no
  /// landmark trailer is reserved.
  bool landmarks_enabled = true;

  friend bool operator==(const HeapConfig&, const HeapConfig&) = default;
};

enum class TableKind { Sensitive, NonSensitive, Free };

struct ChunkRecord {
  Address base = 0;
  std::uint64_t usable = 0;
  std::uint64_t request = 0;
  bool sensitive = false;
  bool has_landmark = false;
  std::optional<std::string> type_id;
  std::string alloc_site;
  std::uint64_t seq = 0;
  Seq alloc_instance = 0;
  TableKind table = TableKind::NonSensitive;

  Address end() const { return base + usable; }
  Address chunk_start() const { return base - kHeaderSize; }
  Address trailer() const { return base + usable; }
  std::uint64_t trailer_size() const { return has_landmark ? kTrailerSize : 0; }
  Address footprint_end() const { return end() + trailer_size(); }
  bool live() const { return table != TableKind::Free; }

  friend bool operator==(const ChunkRecord&, const ChunkRecord&) = default;
};

/// Allocation-table changes in the order they happened; rendered as the
/// `[+] TA <- ...` family of report lines.
struct HeapEvent {
  enum class Kind { AllocInsert, AllocRemove, FreeInsert };
  Kind kind;
  Address base;
  std::uint64_t size;

  friend bool operator==(const HeapEvent&, const HeapEvent&) = default;
};

enum class Ownership { Sensitive, NonSensitive, Freed, Unowned };

struct Classification {
  Ownership kind = Ownership::Unowned;
  const ChunkRecord* record = nullptr;
};

struct AllocSite {
  std::string label;
  std::optional<std::string> type_id;
  Seq instance = 0;
};

/// Flat simulated heap with a bump allocator that never reuses addresses,
/// plus the sensitive / non-sensitive / free tables.
class Heap {
 public:
  explicit Heap(HeapConfig config = {});

  Address alloc(std::uint64_t size, const AllocSite& site);
  Address calloc(std::uint64_t count, std::uint64_t size, const AllocSite& site);
  /// free(0) is a no-op.
  void free(Address base);
  Address realloc(Address base, std::uint64_t new_size, const AllocSite& site);

  void set_sensitive(bool on) noexcept { switch_on_ = on; }
  bool sensitive_switch() const noexcept { return switch_on_; }

  Classification classify(Address addr, std::uint64_t width) const;

  /// Every record (live or freed) whose usable region intersects the range,
  /// in address order.
  std::vector<const ChunkRecord*> intersecting(Address addr, std::uint64_t len) const;
  /// The record whose whole footprint (header, usable, trailer) contains addr.
  const ChunkRecord* footprint_owner(Address addr) const;
  const ChunkRecord* find_by_base(Address base) const;

  std::vector<const ChunkRecord*> table(TableKind kind) const;
  /// Live records in address order.
  std::vector<const ChunkRecord*> live_records() const;
  const std::vector<ChunkRecord>& records() const noexcept { return records_; }

  Address image_start() const noexcept { return config_.base - kHeaderSize; }
  Address image_end() const noexcept { return image_start() + bytes_.size(); }
  bool in_image(Address addr, std::uint64_t len) const noexcept;
  /// Bytes outside the image read as zero.
  std::uint8_t byte_at(Address addr) const noexcept;
  std::vector<std::uint8_t> read(Address addr, std::uint64_t len) const;
  /// Bytes falling outside the image are dropped; returns the count written.
  std::uint64_t write(Address addr, std::span<const std::uint8_t> data);
  std::span<const std::uint8_t> image() const noexcept { return bytes_; }

  std::uint64_t read_u64(Address addr) const;

  const HeapConfig& config() const noexcept { return config_; }
  std::vector<HeapEvent> take_events();

  friend bool operator==(const Heap&, const Heap&) = default;

 private:
  Address allocate(std::uint64_t request, bool sensitive, const AllocSite& site);
  ChunkRecord* find_mut(Address base);
  void write_u64(Address addr, std::uint64_t value);

  HeapConfig config_;
  std::vector<std::uint8_t> bytes_;
  std::vector<ChunkRecord> records_;  // allocation order == address order
  std::vector<std::size_t> free_order_;
  std::vector<HeapEvent> pending_;
  std::uint64_t alloc_count_ = 0;
  bool switch_on_ = false;
};

}  // namespace heapguard
