#include "heapguard/heap.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "heapguard/error.hpp"

namespace heapguard {

Heap::Heap(HeapConfig config) : config_(config) {
  if (config_.base % kChunkAlign != 0 || config_.base < kHeaderSize) {
    throw Error(ErrorCode::ValidationError,
                fmt::format("heap base 0x{:x} is not 16-byte aligned", config_.base));
  }
}

Address Heap::alloc(std::uint64_t size, const AllocSite& site) {
  return allocate(size, switch_on_, site);
}

Address Heap::calloc(std::uint64_t count, std::uint64_t size, const AllocSite& site) {
  std::uint64_t total = 0;
  if (__builtin_mul_overflow(count, size, &total)) {
    throw Error(ErrorCode::MulOverflow,
                fmt::format("calloc({}, {}) overflows 64 bits", count, size));
  }
  const Address base = allocate(total, switch_on_, site);
  // The image is zero-initialised on growth; clear anyway in case the
  // region is ever recycled.
  const ChunkRecord* rec = find_by_base(base);
  std::fill_n(bytes_.begin() + static_cast<std::ptrdiff_t>(base - image_start()), rec->usable,
              std::uint8_t{0});
  return base;
}

Address Heap::allocate(std::uint64_t request, bool sensitive, const AllocSite& site) {
  const bool landmark = sensitive && config_.landmarks_enabled;
  Layout layout = layout_for_request(request, landmark);
  const std::uint64_t cursor = bytes_.size();
  if (layout.footprint > config_.max_bytes || cursor > config_.max_bytes - layout.footprint) {
    throw Error(ErrorCode::HeapExhausted,
                fmt::format("allocation of {} bytes exceeds the {}-byte heap", request,
                            config_.max_bytes));
  }
  bytes_.resize(cursor + layout.footprint, 0);

  const Address chunk = image_start() + cursor;
  const Address base = chunk + kHeaderSize;
  write_u64(chunk, 0);  // prev_size: no coalescing, so never consulted
  write_u64(chunk + 8, encode_size_field(layout.footprint, ChunkFlags{.prev_inuse = true}));
  if (landmark) {
    write(base + layout.usable_size, kLandmark);
    // The eight pad bytes that follow stay zero.
  }

  ChunkRecord rec;
  rec.base = base;
  rec.usable = layout.usable_size;
  rec.request = request;
  rec.sensitive = sensitive;
  rec.has_landmark = landmark;
  rec.type_id = site.type_id;
  rec.alloc_site = site.label;
  rec.seq = alloc_count_++;
  rec.alloc_instance = site.instance;
  rec.table = sensitive ? TableKind::Sensitive : TableKind::NonSensitive;
  records_.push_back(std::move(rec));
  pending_.push_back({HeapEvent::Kind::AllocInsert, base, layout.usable_size});
  return base;
}

void Heap::free(Address base) {
  if (base == 0) return;
  ChunkRecord* rec = find_mut(base);
  if (rec == nullptr) {
    throw Error(ErrorCode::InvalidFree,
                fmt::format("free(0x{:x}) does not name a heap allocation", base));
  }
  if (!rec->live()) {
    throw Error(ErrorCode::DoubleFree, fmt::format("free(0x{:x}) of a freed chunk", base));
  }
  rec->table = TableKind::Free;
  free_order_.push_back(static_cast<std::size_t>(rec - records_.data()));
  pending_.push_back({HeapEvent::Kind::AllocRemove, base, rec->usable});
  pending_.push_back({HeapEvent::Kind::FreeInsert, base, rec->usable});
}

Address Heap::realloc(Address base, std::uint64_t new_size, const AllocSite& site) {
  if (base == 0) return alloc(new_size, site);
  const ChunkRecord* old = find_by_base(base);
  if (old == nullptr || !old->live()) {
    throw Error(ErrorCode::InvalidFree,
                fmt::format("realloc(0x{:x}) does not name a live allocation", base));
  }
  const bool sensitive = old->sensitive;
  const std::uint64_t old_usable = old->usable;
  AllocSite inherited = site;
  if (!inherited.type_id) inherited.type_id = old->type_id;

  const Address fresh = allocate(new_size, sensitive, inherited);
  // `old` may dangle after allocate() grew records_.
  const std::uint64_t keep = std::min(old_usable, find_by_base(fresh)->usable);
  const std::vector<std::uint8_t> data = read(base, keep);
  write(fresh, data);
  free(base);
  return fresh;
}

Classification Heap::classify(Address addr, std::uint64_t width) const {
  Classification out;
  if (width == 0) return out;
  const auto hits = intersecting(addr, width);
  bool any_live = false;
  const ChunkRecord* freed = nullptr;
  for (const ChunkRecord* rec : hits) {
    if (rec->live()) {
      any_live = true;
    } else if (freed == nullptr) {
      freed = rec;
    }
  }
  if (hits.size() == 1 && any_live) {
    const ChunkRecord* rec = hits.front();
    if (addr >= rec->base && addr + width <= rec->end() && addr + width > addr) {
      out.kind = rec->sensitive ? Ownership::Sensitive : Ownership::NonSensitive;
      out.record = rec;
      return out;
    }
  }
  if (!any_live && freed != nullptr) {
    out.kind = Ownership::Freed;
    out.record = freed;
  }
  return out;
}

std::vector<const ChunkRecord*> Heap::intersecting(Address addr, std::uint64_t len) const {
  std::vector<const ChunkRecord*> out;
  if (len == 0) return out;
  // Clamp ranges that would wrap the address space.
  const Address last = addr + len - 1 < addr ? ~Address{0} : addr + len - 1;
  auto it = std::partition_point(records_.begin(), records_.end(),
                                 [&](const ChunkRecord& r) { return r.end() <= addr; });
  for (; it != records_.end() && it->base <= last; ++it) {
    out.push_back(&*it);
  }
  return out;
}

const ChunkRecord* Heap::footprint_owner(Address addr) const {
  auto it = std::partition_point(records_.begin(), records_.end(),
                                 [&](const ChunkRecord& r) { return r.footprint_end() <= addr; });
  if (it != records_.end() && it->chunk_start() <= addr) return &*it;
  return nullptr;
}

const ChunkRecord* Heap::find_by_base(Address base) const {
  auto it = std::lower_bound(records_.begin(), records_.end(), base,
                             [](const ChunkRecord& r, Address b) { return r.base < b; });
  if (it != records_.end() && it->base == base) return &*it;
  return nullptr;
}

ChunkRecord* Heap::find_mut(Address base) { return const_cast<ChunkRecord*>(find_by_base(base)); }

std::vector<const ChunkRecord*> Heap::table(TableKind kind) const {
  std::vector<const ChunkRecord*> out;
  if (kind == TableKind::Free) {
    for (std::size_t idx : free_order_) out.push_back(&records_[idx]);
    return out;
  }
  for (const ChunkRecord& rec : records_) {
    if (rec.table == kind) out.push_back(&rec);
  }
  return out;
}

std::vector<const ChunkRecord*> Heap::live_records() const {
  std::vector<const ChunkRecord*> out;
  for (const ChunkRecord& rec : records_) {
    if (rec.live()) out.push_back(&rec);
  }
  return out;
}

bool Heap::in_image(Address addr, std::uint64_t len) const noexcept {
  return addr >= image_start() && len <= bytes_.size() && addr - image_start() <= bytes_.size() - len;
}

std::uint8_t Heap::byte_at(Address addr) const noexcept {
  if (addr < image_start() || addr - image_start() >= bytes_.size()) return 0;
  return bytes_[addr - image_start()];
}

std::vector<std::uint8_t> Heap::read(Address addr, std::uint64_t len) const {
  std::vector<std::uint8_t> out(len);
  for (std::uint64_t i = 0; i < len; ++i) out[i] = byte_at(addr + i);
  return out;
}

std::uint64_t Heap::write(Address addr, std::span<const std::uint8_t> data) {
  std::uint64_t written = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Address at = addr + i;
    if (at < image_start() || at - image_start() >= bytes_.size()) continue;
    bytes_[at - image_start()] = data[i];
    ++written;
  }
  return written;
}

std::uint64_t Heap::read_u64(Address addr) const {
  std::uint64_t value = 0;
  for (int i = 7; i >= 0; --i) value = (value << 8) | byte_at(addr + static_cast<unsigned>(i));
  return value;
}

void Heap::write_u64(Address addr, std::uint64_t value) {
  std::uint8_t raw[8];
  for (auto& b : raw) {
    b = static_cast<std::uint8_t>(value & 0xff);
    value >>= 8;
  }
  write(addr, raw);
}

std::vector<HeapEvent> Heap::take_events() {
  std::vector<HeapEvent> out;
  out.swap(pending_);
  return out;
}

}  // namespace heapguard
