#include <gtest/gtest.h>

#include <random>

#include "heapguard/error.hpp"
#include "heapguard/heap.hpp"

using namespace heapguard;

namespace {

AllocSite site(const char* label = "main:L0") { return AllocSite{label, std::nullopt, 0}; }

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::ParseError;
}

// Byte-by-byte ownership scan over every record, independent of Heap::classify.
Classification oracle_classify(const Heap& heap, Address addr, std::uint64_t width) {
  const ChunkRecord* live_owner = nullptr;
  bool all_in_same_live = true;
  bool any_live = false;
  const ChunkRecord* freed = nullptr;
  for (std::uint64_t i = 0; i < width; ++i) {
    const Address a = addr + i;
    const ChunkRecord* owner = nullptr;
    for (const ChunkRecord& r : heap.records()) {
      if (a >= r.base && a < r.base + r.usable) owner = &r;
    }
    if (owner != nullptr && owner->live()) {
      any_live = true;
      if (i == 0) live_owner = owner;
      if (owner != live_owner) all_in_same_live = false;
    } else {
      all_in_same_live = false;
      if (owner != nullptr && (freed == nullptr || owner->base < freed->base)) freed = owner;
    }
  }
  Classification c;
  if (live_owner != nullptr && all_in_same_live) {
    c.kind = live_owner->sensitive ? Ownership::Sensitive : Ownership::NonSensitive;
    c.record = live_owner;
  } else if (!any_live && freed != nullptr) {
    c.kind = Ownership::Freed;
    c.record = freed;
  }
  return c;
}

}  // namespace

TEST(Heap, OffByOneBufferAddresses) {
  Heap heap;
  EXPECT_EQ(heap.alloc(128, site()), 0x2088010u);
  EXPECT_EQ(heap.alloc(128, site()), 0x20880a0u);
  const auto events = heap.take_events();
  ASSERT_EQ(events.size(), 2u);
  EXPECT_EQ(events[0], (HeapEvent{HeapEvent::Kind::AllocInsert, 0x2088010, 0x80}));
  EXPECT_EQ(events[1], (HeapEvent{HeapEvent::Kind::AllocInsert, 0x20880a0, 0x80}));
}

TEST(Heap, HeaderEncodesFootprintWithPrevInuse) {
  Heap heap;
  const Address b = heap.alloc(128, site());
  EXPECT_EQ(heap.read_u64(b - 16), 0u);
  EXPECT_EQ(heap.read_u64(b - 8), 0x91u);
}

TEST(Heap, SensitiveAllocationGetsLandmark) {
  Heap heap;
  heap.set_sensitive(true);
  const Address b = heap.alloc(128, site());
  const auto trailer = heap.read(b + 128, 16);
  const std::vector<std::uint8_t> expect = {0xef, 0xef, 0xef, 0xef, 0xfe, 0xfe, 0xfe, 0xfe,
                                            0, 0, 0, 0, 0, 0, 0, 0};
  EXPECT_EQ(trailer, expect);
  heap.set_sensitive(false);
  // Same progression, shifted by the trailer.
  EXPECT_EQ(heap.alloc(16, site()), b + 128 + 16 + 16);
  EXPECT_EQ(heap.table(TableKind::Sensitive).size(), 1u);
  EXPECT_EQ(heap.table(TableKind::NonSensitive).size(), 1u);
}

TEST(Heap, LandmarksDisabledKeepsSpacing) {
  Heap heap(HeapConfig{.landmarks_enabled = false});
  heap.set_sensitive(true);
  EXPECT_EQ(heap.alloc(128, site()), 0x2088010u);
  EXPECT_EQ(heap.alloc(128, site()), 0x20880a0u);
  EXPECT_EQ(heap.table(TableKind::Sensitive).size(), 2u);
  EXPECT_FALSE(heap.records()[0].has_landmark);
}

TEST(Heap, ToggleIsIdempotentAndOnlyAffectsLaterAllocs) {
  Heap heap;
  const Address a = heap.alloc(16, site());
  heap.set_sensitive(true);
  heap.set_sensitive(true);
  const Address b = heap.alloc(16, site());
  EXPECT_FALSE(heap.find_by_base(a)->sensitive);
  EXPECT_TRUE(heap.find_by_base(b)->sensitive);
}

TEST(Heap, CallocZeroesAndChecks) {
  Heap heap;
  const Address b = heap.calloc(1, 224, site());
  EXPECT_EQ(heap.find_by_base(b)->usable, 224u);
  for (std::uint8_t byte : heap.read(b, 224)) EXPECT_EQ(byte, 0);
  const Address c = heap.calloc(1, 2200, site());
  EXPECT_EQ(heap.find_by_base(c)->usable, 2208u);
  EXPECT_EQ(code_of([&] { heap.calloc(0, 8, site()); }), ErrorCode::ZeroRequest);
  EXPECT_EQ(code_of([&] { heap.calloc(std::uint64_t{1} << 33, std::uint64_t{1} << 33, site()); }),
            ErrorCode::MulOverflow);
}

TEST(Heap, FreeMovesToFreeTableInOrder) {
  Heap heap;
  const Address a = heap.alloc(128, site());
  const Address b = heap.alloc(128, site());
  heap.take_events();
  heap.free(a);
  heap.free(b);
  const auto events = heap.take_events();
  const std::vector<HeapEvent> expect = {{HeapEvent::Kind::AllocRemove, a, 0x80},
                                         {HeapEvent::Kind::FreeInsert, a, 0x80},
                                         {HeapEvent::Kind::AllocRemove, b, 0x80},
                                         {HeapEvent::Kind::FreeInsert, b, 0x80}};
  EXPECT_EQ(events, expect);
  const auto freed = heap.table(TableKind::Free);
  ASSERT_EQ(freed.size(), 2u);
  EXPECT_EQ(freed[0]->base, a);
  EXPECT_EQ(freed[1]->base, b);
  EXPECT_TRUE(heap.live_records().empty());
}

TEST(Heap, FreeErrors) {
  Heap heap;
  const Address a = heap.alloc(128, site());
  EXPECT_EQ(code_of([&] { heap.free(a + 1); }), ErrorCode::InvalidFree);
  heap.free(a);
  EXPECT_EQ(code_of([&] { heap.free(a); }), ErrorCode::DoubleFree);
  heap.free(0);
}

TEST(Heap, ReallocCopiesAndKeepsSensitivity) {
  Heap heap;
  heap.set_sensitive(true);
  const Address a = heap.alloc(128, site());
  std::vector<std::uint8_t> data(128);
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<std::uint8_t>(i * 3);
  heap.write(a, data);
  heap.set_sensitive(false);
  const Address b = heap.realloc(a, 256, site());
  EXPECT_NE(a, b);
  EXPECT_EQ(heap.read(b, 128), data);
  EXPECT_TRUE(heap.find_by_base(b)->sensitive);
  EXPECT_FALSE(heap.find_by_base(a)->live());

  const Address c = heap.realloc(b, 64, site());
  // Byte scan of the image: the landmark sits right after the new usable region.
  const auto trailer = heap.read(c + 64, 8);
  EXPECT_EQ(trailer, std::vector<std::uint8_t>(kLandmark.begin(), kLandmark.end()));

  const Address d = heap.realloc(0, 64, site());
  EXPECT_EQ(heap.find_by_base(d)->usable, 64u);
  EXPECT_EQ(code_of([&] { heap.realloc(a, 64, site()); }), ErrorCode::InvalidFree);
}

TEST(Heap, ExhaustionAndZeroRequest) {
  Heap heap(HeapConfig{.max_bytes = 1024});
  EXPECT_EQ(code_of([&] { heap.alloc(0, site()); }), ErrorCode::ZeroRequest);
  heap.alloc(900, site());
  EXPECT_EQ(code_of([&] { heap.alloc(200, site()); }), ErrorCode::HeapExhausted);
}

TEST(Heap, ClassifyExamples) {
  Heap heap;
  const Address a = heap.alloc(128, site());
  heap.alloc(128, site());
  const Classification in = heap.classify(0x208808f, 1);
  EXPECT_EQ(in.kind, Ownership::NonSensitive);
  EXPECT_EQ(in.record->base, a);
  EXPECT_EQ(heap.classify(0x2088090, 1).kind, Ownership::Unowned);
  heap.free(a);
  EXPECT_EQ(heap.classify(0x2088010, 1).kind, Ownership::Freed);
}

TEST(HeapProperty, ClassifyMatchesLinearScanOracle) {
  std::mt19937_64 rng(99);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    Heap heap;
    const int n = 1 + static_cast<int>(rng() % 4);
    std::vector<Address> bases;
    for (int i = 0; i < n; ++i) {
      heap.set_sensitive(rng() % 2 == 0);
      bases.push_back(heap.alloc(1 + rng() % 48, site()));
    }
    for (Address b : bases) {
      if (rng() % 3 == 0) heap.free(b);
    }
    const Address lo = heap.image_start();
    const Address hi = heap.image_end() + 16;
    // Sample addresses across the span; every width for each.
    for (int s = 0; s < 24; ++s) {
      const Address addr = lo + rng() % (hi - lo);
      for (std::uint64_t w = 1; w <= 32; ++w) {
        const Classification got = heap.classify(addr, w);
        const Classification want = oracle_classify(heap, addr, w);
        if (got.kind != want.kind || got.record != want.record) ++mismatches;
      }
    }
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(HeapProperty, ExhaustivePartitionOnSmallHeap) {
  Heap heap;
  heap.alloc(40, site());
  heap.set_sensitive(true);
  const Address s = heap.alloc(100, site());
  heap.set_sensitive(false);
  const Address f = heap.alloc(16, site());
  heap.alloc(8, site());
  heap.free(f);
  (void)s;
  int mismatches = 0;
  for (Address a = heap.image_start(); a < heap.image_end() + 8; ++a) {
    for (std::uint64_t w : {1u, 2u, 4u, 8u}) {
      const Classification got = heap.classify(a, w);
      const Classification want = oracle_classify(heap, a, w);
      if (got.kind != want.kind || got.record != want.record) ++mismatches;
    }
  }
  EXPECT_EQ(mismatches, 0);
}

TEST(HeapProperty, TablesAreDisjointAndDeterministic) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::pair<std::uint64_t, bool>> plan;
    for (int i = 0; i < 10; ++i) plan.emplace_back(1 + rng() % 300, rng() % 2 == 0);
    auto build = [&] {
      Heap h;
      for (auto [size, sens] : plan) {
        h.set_sensitive(sens);
        h.alloc(size, site());
      }
      return h;
    };
    const Heap a = build();
    const Heap b = build();
    EXPECT_TRUE(a == b);
    for (const ChunkRecord* s : a.table(TableKind::Sensitive)) {
      for (const ChunkRecord* n : a.table(TableKind::NonSensitive)) EXPECT_NE(s->base, n->base);
    }
    // Live usable regions are pairwise disjoint.
    const auto live = a.live_records();
    for (std::size_t i = 1; i < live.size(); ++i) EXPECT_LE(live[i - 1]->end(), live[i]->base);
  }
}
