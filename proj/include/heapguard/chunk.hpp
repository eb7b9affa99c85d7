#pragma once

// glibc-style chunk geometry for the simulated heap.
//
//   chunk start -> +-----------------+
//                  | prev_size   (8) |
//                  | size_field  (8) |  low 3 bits: P, M, N
//   usable base -> +-----------------+
//                  | usable bytes    |  request rounded up to 16
//                  +-----------------+
//                  | landmark    (8) |  sensitive chunks only
//                  | zero pad    (8) |
//                  +-----------------+

#include <array>
#include <cstdint>
#include <span>

namespace heapguard {

using Address = std::uint64_t;

inline constexpr std::uint64_t kHeaderSize = 16;
inline constexpr std::uint64_t kTrailerSize = 16;
inline constexpr std::uint64_t kChunkAlign = 16;
inline constexpr std::uint64_t kMinUsable = 16;
inline constexpr std::uint64_t kMaxRequest = std::uint64_t{1} << 48;

inline constexpr std::uint64_t kPrevInuseBit = 0x1;
inline constexpr std::uint64_t kIsMmappedBit = 0x2;
inline constexpr std::uint64_t kNonMainArenaBit = 0x4;
inline constexpr std::uint64_t kFlagMask = 0x7;

inline constexpr std::array<std::uint8_t, 8> kLandmark = {0xef, 0xef, 0xef, 0xef,
                                                           0xfe, 0xfe, 0xfe, 0xfe};

struct ChunkFlags {
  bool prev_inuse = false;
  bool is_mmapped = false;
  bool non_main_arena = false;

  friend bool operator==(const ChunkFlags&, const ChunkFlags&) = default;
};

struct DecodedSize {
  std::uint64_t size = 0;
  ChunkFlags flags;

  friend bool operator==(const DecodedSize&, const DecodedSize&) = default;
};

struct ChunkHeader {
  std::uint64_t prev_size = 0;
  std::uint64_t size_field = 0;

  DecodedSize decoded() const;
};

struct Layout {
  std::uint64_t usable_size = 0;
  std::uint64_t header_size = kHeaderSize;
  std::uint64_t trailer_size = 0;
  std::uint64_t footprint = 0;

  friend bool operator==(const Layout&, const Layout&) = default;
};

/// Throws Error(SizeNotAligned) when `size` has any of its low 3 bits set.
std::uint64_t encode_size_field(std::uint64_t size, ChunkFlags flags);
DecodedSize decode_size_field(std::uint64_t raw) noexcept;

/// Throws Error(ZeroRequest) for a zero-byte request and Error(HeapExhausted)
/// for requests above kMaxRequest (negative sizes reinterpreted as unsigned).
Layout layout_for_request(std::uint64_t request, bool sensitive);

/// True iff the bytes equal the landmark constant.
bool check_landmark(std::span<const std::uint8_t, 8> trailer) noexcept;

constexpr std::uint64_t round_up(std::uint64_t value, std::uint64_t align) noexcept {
  return (value + align - 1) / align * align;
}

}  // namespace heapguard
