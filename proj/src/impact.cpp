#include "heapguard/impact.hpp"

#include <algorithm>
#include <limits>

#include "heapguard/error.hpp"

namespace heapguard {

namespace {

constexpr std::int64_t kMin = std::numeric_limits<std::int64_t>::min();
constexpr std::int64_t kMax = std::numeric_limits<std::int64_t>::max();

Interval width_range(std::uint32_t width) {
  if (width >= 8) return Interval::full();
  return {0, static_cast<std::int64_t>((std::uint64_t{1} << (8 * width)) - 1)};
}

class Propagator {
 public:
  Propagator(TaintState& taint, const MachineState& state) : taint_(taint), state_(state) {}

  bool tainted(const OperandValue& op) const { return op.reg && taint_.reg(*op.reg).has_value(); }
  Interval interval(const OperandValue& op) const {
    if (op.reg) {
      if (auto iv = taint_.reg(*op.reg)) return *iv;
    }
    return Interval::point(op.value);
  }

  /// Returns true when the instance lets taint reach sensitive memory.
  bool apply(const StepResult& r, const Instruction& ins) {
    const auto& ops = r.operands;
    const auto& writes = r.effects.reg_writes;
    switch (ins.op) {
      case Opcode::Add:
      case Opcode::Sub:
      case Opcode::Mul:
      case Opcode::CmpLe:
      case Opcode::CmpLt:
      case Opcode::CmpEq:
        if (tainted(ops[0]) || tainted(ops[1])) {
          taint_.set_reg(writes[0], interval_arith(ins.op, interval(ops[0]), interval(ops[1])));
        } else {
          taint_.set_reg(writes[0], std::nullopt);
        }
        return false;
      case Opcode::Load: {
        const bool t = tainted(ops[0]) || taint_.any_tainted(static_cast<Address>(ops[0].value), ins.width);
        taint_.set_reg(writes[0], t ? std::optional(width_range(ins.width)) : std::nullopt);
        return false;
      }
      case Opcode::Store:
      case Opcode::StoreBytes: {
        const std::uint64_t len = ins.op == Opcode::Store ? ins.width : ins.bytes.size();
        const auto addr = static_cast<Address>(ops[0].value);
        const bool addr_t = tainted(ops[0]);
        const bool value_t = ins.op == Opcode::Store && tainted(ops[1]);
        bool hit = false;
        if (addr_t) {
          const Interval iv = interval(ops[0]);
          Address lo = 0;
          Address hi = std::numeric_limits<Address>::max();
          if (iv.lo >= 0) {
            lo = static_cast<Address>(iv.lo);
            const Address top = static_cast<Address>(iv.hi);
            hi = top + (len - 1) < top ? hi : top + (len - 1);
          }
          hit = touches_sensitive(state_.heap, lo, hi);
        }
        if (value_t && touches_sensitive(state_.heap, addr, addr + (len - 1))) hit = true;
        if (addr_t || value_t) {
          for (std::uint64_t i = 0; i < len; ++i) taint_.taint_byte(addr + i);
        }
        return hit;
      }
      case Opcode::Call:
        for (std::size_t i = 0; i < writes.size() && i < ops.size(); ++i) {
          taint_.set_reg(writes[i], tainted(ops[i]) ? std::optional(interval(ops[i])) : std::nullopt);
        }
        return false;
      case Opcode::Ret:
        if (!writes.empty()) {
          const bool t = !ops.empty() && tainted(ops[0]);
          taint_.set_reg(writes[0], t ? std::optional(interval(ops[0])) : std::nullopt);
        }
        return false;
      case Opcode::Realloc: {
        if (!r.effects.mem_reads.empty()) {
          const MemRange& from = r.effects.mem_reads[0];
          const MemRange& to = r.effects.mem_writes[0];
          for (std::uint64_t i = 0; i < from.len; ++i) {
            if (taint_.byte_tainted(from.addr + i)) taint_.taint_byte(to.addr + i);
          }
        }
        taint_.set_reg(writes[0], std::nullopt);
        return false;
      }
      case Opcode::Const:
      case Opcode::Input:
      case Opcode::Alloc:
      case Opcode::Calloc:
        taint_.set_reg(writes[0], std::nullopt);
        return false;
      default:
        return false;
    }
  }

 private:
  TaintState& taint_;
  const MachineState& state_;
};

}  // namespace

Interval Interval::full() { return {kMin, kMax}; }

Interval interval_arith(Opcode op, Interval a, Interval b) {
  switch (op) {
    case Opcode::Add: {
      Interval out;
      if (__builtin_add_overflow(a.lo, b.lo, &out.lo) || __builtin_add_overflow(a.hi, b.hi, &out.hi)) {
        return Interval::full();
      }
      return out;
    }
    case Opcode::Sub: {
      Interval out;
      if (__builtin_sub_overflow(a.lo, b.hi, &out.lo) || __builtin_sub_overflow(a.hi, b.lo, &out.hi)) {
        return Interval::full();
      }
      return out;
    }
    case Opcode::Mul: {
      std::int64_t p[4];
      if (__builtin_mul_overflow(a.lo, b.lo, &p[0]) || __builtin_mul_overflow(a.lo, b.hi, &p[1]) ||
          __builtin_mul_overflow(a.hi, b.lo, &p[2]) || __builtin_mul_overflow(a.hi, b.hi, &p[3])) {
        return Interval::full();
      }
      return {*std::min_element(p, p + 4), *std::max_element(p, p + 4)};
    }
    case Opcode::CmpLe:
    case Opcode::CmpLt:
    case Opcode::CmpEq:
      return {0, 1};
    default:
      return Interval::full();
  }
}

bool TaintState::any_tainted(Address addr, std::uint64_t len) const {
  for (std::uint64_t i = 0; i < len; ++i) {
    if (byte_tainted(addr + i)) return true;
  }
  return false;
}

std::optional<Interval> TaintState::reg(RegKey k) const {
  auto it = regs_.find(key(k));
  if (it == regs_.end()) return std::nullopt;
  return it->second;
}

void TaintState::set_reg(RegKey k, std::optional<Interval> value) {
  if (value) {
    regs_[key(k)] = *value;
  } else {
    regs_.erase(key(k));
  }
}

std::vector<CorruptedByte> corrupted_bytes(Address addr, const std::vector<std::uint8_t>& data) {
  std::vector<CorruptedByte> out;
  out.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out.push_back({addr + i, data[i]});
  return out;
}

bool touches_sensitive(const Heap& heap, Address lo, Address hi) {
  if (hi < lo) return false;
  for (const ChunkRecord* rec : heap.table(TableKind::Sensitive)) {
    const Address first = rec->base;
    const Address last = rec->footprint_end() - 1;
    if (lo <= last && first <= hi) return true;
  }
  return false;
}

ImpactVerdict speculative_continue(const Interpreter& interp, MachineState state,
                                   const std::vector<CorruptedByte>& corrupted, Seq fault_seq,
                                   const std::vector<std::int64_t>& timeline,
                                   const ImpactConfig& config) {
  state.record_dependences = false;
  TaintState taint;
  ImpactVerdict verdict;
  bool direct_hit = false;
  for (const CorruptedByte& b : corrupted) {
    state.heap.write(b.addr, std::span<const std::uint8_t>(&b.value, 1));
    taint.taint_byte(b.addr);
    if (touches_sensitive(state.heap, b.addr, b.addr)) direct_hit = true;
  }
  if (direct_hit) {
    verdict.affects_sensitive = true;
    verdict.witness = fault_seq;
    return verdict;
  }

  SpeculativeInput input(timeline, config.default_input);
  Propagator prop(taint, state);
  for (std::uint64_t steps = 0; steps < config.budget; ++steps) {
    StepResult r;
    try {
      r = interp.step(state, input);
    } catch (const Error&) {
      // The corrupted continuation crashed; treat as reaching sensitive
      // state rather than risk a false negative.
      verdict.affects_sensitive = true;
      verdict.witness = state.last_seq + 1;
      return verdict;
    }
    if (r.status == StepStatus::Halted && r.seq == 0) break;
    const Instruction& ins = interp.program().at(r.where);
    if (r.suppressed) {
      Interpreter::apply_suppressed(state, r.suppressed->first, r.suppressed->second);
    }
    if (prop.apply(r, ins)) {
      verdict.affects_sensitive = true;
      verdict.witness = r.seq;
      return verdict;
    }
    if (r.status == StepStatus::Halted) return verdict;
  }
  if (!state.halted) {
    verdict.affects_sensitive = true;
    verdict.budget_exhausted = true;
  }
  return verdict;
}

RecoveryDecision decide_recovery(const CorruptionReport& report,
                                 const std::optional<ImpactVerdict>& verdict) {
  if (report.target_sensitive || report.kind == CorruptionKind::LandmarkViolation) {
    return RecoveryDecision::Recover;
  }
  if (!verdict) {
    throw Error(ErrorCode::MissingVerdict,
                "non-sensitive corruption at " + report.instr.name + " has no impact verdict");
  }
  return verdict->affects_sensitive ? RecoveryDecision::Recover : RecoveryDecision::LogAndContinue;
}

}  // namespace heapguard
