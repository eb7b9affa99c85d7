#pragma once

#include <cstdint>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "heapguard/detector.hpp"
#include "heapguard/interp.hpp"

namespace heapguard {

/// Closed signed interval.
struct Interval {
  std::int64_t lo = 0;
  std::int64_t hi = 0;

  static Interval point(std::int64_t v) { return {v, v}; }
  static Interval full();
  bool contains(std::int64_t v) const { return lo <= v && v <= hi; }

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Interval transfer for the arithmetic opcodes; any overflow widens to full().
Interval interval_arith(Opcode op, Interval a, Interval b);

class TaintState {
 public:
  void taint_byte(Address addr) { bytes_.insert(addr); }
  bool byte_tainted(Address addr) const { return bytes_.count(addr) != 0; }
  bool any_tainted(Address addr, std::uint64_t len) const;
  std::size_t tainted_byte_count() const { return bytes_.size(); }

  std::optional<Interval> reg(RegKey key) const;
  void set_reg(RegKey key, std::optional<Interval> value);

 private:
  static std::uint64_t key(RegKey k) { return (std::uint64_t{k.frame} << 32) | k.reg; }
  std::unordered_set<Address> bytes_;
  std::unordered_map<std::uint64_t, Interval> regs_;
};

struct CorruptedByte {
  Address addr = 0;
  std::uint8_t value = 0;
};

/// Bytes a suppressed faulting write would have produced.
std::vector<CorruptedByte> corrupted_bytes(Address addr, const std::vector<std::uint8_t>& data);

struct ImpactConfig {
  std::uint64_t budget = 100'000;
  std::int64_t default_input = 0;
};

struct ImpactVerdict {
  bool affects_sensitive = false;
  std::optional<Seq> witness;
  bool budget_exhausted = false;
};

/// Re-reads inputs already consumed on the timeline, then a fixed default.
class SpeculativeInput final : public InputSource {
 public:
  SpeculativeInput(std::vector<std::int64_t> timeline, std::int64_t fallback)
      : timeline_(std::move(timeline)), fallback_(fallback) {}
  std::optional<std::int64_t> next(std::uint64_t cursor, InstrRef) override {
    return cursor < timeline_.size() ? timeline_[cursor] : fallback_;
  }

 private:
  std::vector<std::int64_t> timeline_;
  std::int64_t fallback_;
};

/// True iff [lo, hi] meets any live sensitive chunk's usable region or
/// landmark trailer.
bool touches_sensitive(const Heap& heap, Address lo, Address hi);

/// Applies the corrupted bytes to `state` (a private copy taken right after
/// the faulting step), marks them tainted and runs forward for up to
/// config.budget steps propagating taint with interval addresses.
ImpactVerdict speculative_continue(const Interpreter& interp, MachineState state,
                                   const std::vector<CorruptedByte>& corrupted, Seq fault_seq,
                                   const std::vector<std::int64_t>& timeline,
                                   const ImpactConfig& config);

enum class RecoveryDecision { Recover, LogAndContinue };

/// Throws Error(MissingVerdict) for a non-sensitive report without a verdict.
RecoveryDecision decide_recovery(const CorruptionReport& report,
                                 const std::optional<ImpactVerdict>& verdict);

}  // namespace heapguard
