#include "heapguard/chunk.hpp"

#include <algorithm>
#include <string>

#include "heapguard/error.hpp"

namespace heapguard {

DecodedSize ChunkHeader::decoded() const { return decode_size_field(size_field); }

std::uint64_t encode_size_field(std::uint64_t size, ChunkFlags flags) {
  if ((size & kFlagMask) != 0) {
    throw Error(ErrorCode::SizeNotAligned, "chunk size " + std::to_string(size) +
                                               " is not a multiple of 8");
  }
  std::uint64_t raw = size;
  if (flags.prev_inuse) raw |= kPrevInuseBit;
  if (flags.is_mmapped) raw |= kIsMmappedBit;
  if (flags.non_main_arena) raw |= kNonMainArenaBit;
  return raw;
}

DecodedSize decode_size_field(std::uint64_t raw) noexcept {
  DecodedSize out;
  out.size = raw & ~kFlagMask;
  out.flags.prev_inuse = (raw & kPrevInuseBit) != 0;
  out.flags.is_mmapped = (raw & kIsMmappedBit) != 0;
  out.flags.non_main_arena = (raw & kNonMainArenaBit) != 0;
  return out;
}

Layout layout_for_request(std::uint64_t request, bool sensitive) {
  if (request == 0) {
    throw Error(ErrorCode::ZeroRequest, "allocation request of zero bytes");
  }
  if (request > kMaxRequest) {
    throw Error(ErrorCode::HeapExhausted, "allocation request of " + std::to_string(request) +
                                              " bytes exceeds the addressable heap");
  }
  Layout layout;
  layout.usable_size = round_up(std::max(request, kMinUsable), kChunkAlign);
  layout.trailer_size = sensitive ? kTrailerSize : 0;
  layout.footprint = layout.header_size + layout.usable_size + layout.trailer_size;
  return layout;
}

bool check_landmark(std::span<const std::uint8_t, 8> trailer) noexcept {
  return std::equal(trailer.begin(), trailer.end(), kLandmark.begin());
}

}  // namespace heapguard
