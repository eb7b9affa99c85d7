#include "heapguard/interp.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>
#include "json.hpp"

#include "heapguard/error.hpp"

namespace heapguard {

namespace {

std::vector<std::uint8_t> little_endian(std::int64_t value, std::uint32_t width) {
  std::vector<std::uint8_t> out(width);
  auto bits = static_cast<std::uint64_t>(value);
  for (auto& b : out) {
    b = static_cast<std::uint8_t>(bits & 0xff);
    bits >>= 8;
  }
  return out;
}

std::int64_t from_little_endian(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t bits = 0;
  for (auto it = bytes.rbegin(); it != bytes.rend(); ++it) bits = (bits << 8) | *it;
  return static_cast<std::int64_t>(bits);
}

}  // namespace

std::int64_t eval_arith(Opcode op, std::int64_t a, std::int64_t b) {
  const auto ua = static_cast<std::uint64_t>(a);
  const auto ub = static_cast<std::uint64_t>(b);
  switch (op) {
    case Opcode::Add: return static_cast<std::int64_t>(ua + ub);
    case Opcode::Sub: return static_cast<std::int64_t>(ua - ub);
    case Opcode::Mul: return static_cast<std::int64_t>(ua * ub);
    case Opcode::CmpLe: return a <= b ? 1 : 0;
    case Opcode::CmpLt: return a < b ? 1 : 0;
    case Opcode::CmpEq: return a == b ? 1 : 0;
    default:
      throw std::invalid_argument("eval_arith: not an arithmetic opcode");
  }
}

std::string MachineState::call_path(const Program& program) const {
  std::string out;
  for (const Frame& f : frames) {
    if (!out.empty()) out += '>';
    out += program.functions[f.fn].name;
  }
  return out;
}

std::string serialize_state(const MachineState& state) {
  using nlohmann::json;
  json j;
  const Heap& heap = state.heap;
  j["heap"]["base"] = heap.config().base;
  j["heap"]["max_bytes"] = heap.config().max_bytes;
  j["heap"]["landmarks"] = heap.config().landmarks_enabled;
  j["heap"]["switch"] = heap.sensitive_switch();
  std::string bytes;
  bytes.reserve(heap.image().size() * 2);
  for (std::uint8_t b : heap.image()) bytes += fmt::format("{:02x}", b);
  j["heap"]["image"] = bytes;
  json records = json::array();
  for (const ChunkRecord& r : heap.records()) {
    records.push_back({{"base", r.base},
                       {"usable", r.usable},
                       {"request", r.request},
                       {"sensitive", r.sensitive},
                       {"landmark", r.has_landmark},
                       {"type", r.type_id ? *r.type_id : ""},
                       {"site", r.alloc_site},
                       {"seq", r.seq},
                       {"instance", r.alloc_instance},
                       {"table", static_cast<int>(r.table)}});
  }
  j["heap"]["records"] = records;
  json freed = json::array();
  for (const ChunkRecord* r : heap.table(TableKind::Free)) freed.push_back(r->base);
  j["heap"]["free_order"] = freed;

  json frames = json::array();
  for (const Frame& f : state.frames) {
    json regs = json::array();
    for (const auto& r : f.regs) regs.push_back(r ? json(*r) : json(nullptr));
    frames.push_back({{"fn", f.fn},
                      {"pc", f.pc},
                      {"id", f.id},
                      {"call_seq", f.call_seq},
                      {"regs", regs},
                      {"ret_dest", f.ret_dest ? json(*f.ret_dest) : json(nullptr)},
                      {"last_branch", f.last_branch}});
  }
  j["frames"] = frames;
  j["input_cursor"] = state.input_cursor;
  j["step_count"] = state.step_count;
  j["last_seq"] = state.last_seq;
  j["next_frame_id"] = state.next_frame_id;
  j["halted"] = state.halted;
  j["record"] = state.record_dependences;

  const DependenceGraph& g = state.recorder.graph();
  json nodes = json::array();
  for (Seq s = 1; s <= g.size(); ++s) {
    const DepNode& n = g.node(s);
    nodes.push_back({n.seq, n.where.fn, n.where.index, static_cast<int>(n.op), n.data, n.control,
                     n.input ? json({n.input->value, n.input->cursor}) : json(nullptr)});
  }
  j["graph"] = nodes;
  std::map<std::uint64_t, Seq> regw(state.recorder.reg_writers().begin(),
                                    state.recorder.reg_writers().end());
  std::map<Address, Seq> bytew(state.recorder.byte_writers().begin(),
                               state.recorder.byte_writers().end());
  j["reg_writers"] = regw;
  j["byte_writers"] = bytew;
  return j.dump();
}

Interpreter::Interpreter(const Program& program, const TypeDb* db, InterpConfig config)
    : program_(program), db_(db), config_(config), site_types_(resolve_site_types(program, db)) {
  for (const Function& fn : program_.functions) {
    FunctionAnalysis a;
    a.cfg = build_cfg(fn);
    a.ipdom = post_dominators(a.cfg);
    a.cd = control_dependence(a.cfg, a.ipdom);
    analyses_.push_back(std::move(a));
  }
}

MachineState Interpreter::initial_state(const HeapConfig& heap, bool sensitive_at_start) const {
  MachineState state;
  state.heap = Heap(heap);
  state.heap.set_sensitive(sensitive_at_start);
  const Function& main = program_.main();
  Frame frame;
  frame.fn = program_.main_index;
  frame.id = state.next_frame_id++;
  frame.regs.assign(main.reg_names.size(), std::nullopt);
  frame.last_branch.assign(main.body.size(), 0);
  state.frames.push_back(std::move(frame));
  return state;
}

std::int64_t Interpreter::read_operand(const MachineState& state, const Frame& frame,
                                       const Operand& op, StepResult& result) const {
  if (!op.is_reg()) {
    result.operands.push_back({std::nullopt, op.imm});
    return op.imm;
  }
  const auto& slot = frame.regs[op.reg];
  if (!slot) {
    const Function& fn = program_.functions[frame.fn];
    throw Error(ErrorCode::UndefinedRegister,
                fmt::format("{}:{} reads {} before any write", fn.name, fn.body[frame.pc].label,
                            fn.reg_names[op.reg]));
  }
  (void)state;
  const RegKey key{frame.id, op.reg};
  result.operands.push_back({key, *slot});
  result.effects.reg_reads.push_back(key);
  return *slot;
}

Seq Interpreter::governing_instance(const Frame& frame, std::uint32_t index) const {
  Seq best = 0;
  for (std::uint32_t b : analyses_[frame.fn].cd[index]) best = std::max(best, frame.last_branch[b]);
  return best != 0 ? best : frame.call_seq;
}

AllocSite Interpreter::alloc_site(InstrRef ref, Seq seq) const {
  AllocSite site;
  site.label = program_.site_name(ref);
  const std::string& type = site_types_[ref.fn][ref.index];
  if (!type.empty()) site.type_id = type;
  site.instance = seq;
  return site;
}

StepResult Interpreter::step(MachineState& state, InputSource& input) const {
  if (state.halted || state.frames.empty()) {
    StepResult done;
    done.status = StepStatus::Halted;
    return done;
  }
  if (state.step_count >= config_.step_budget) {
    throw Error(ErrorCode::StepBudgetExceeded,
                fmt::format("step budget of {} exhausted", config_.step_budget));
  }

  Frame& frame = state.frames.back();
  const Function& fn = program_.functions[frame.fn];
  const Instruction& ins = fn.body[frame.pc];
  const InstrRef where{frame.fn, frame.pc};

  StepResult result;
  result.where = where;
  const Seq seq = state.last_seq + 1;
  result.seq = seq;
  InstanceEffects& fx = result.effects;
  fx.seq = seq;
  fx.where = where;
  fx.op = ins.op;
  fx.governing = governing_instance(frame, frame.pc);

  auto arg = [&](std::size_t i) { return read_operand(state, frame, ins.args[i], result); };
  auto set_dest = [&](std::int64_t value) {
    frame.regs[*ins.dest] = value;
    fx.reg_writes.push_back({frame.id, *ins.dest});
  };
  auto provenance = [&](Address addr, std::uint64_t len) -> Seq {
    const auto hits = state.heap.intersecting(addr, len);
    return hits.empty() ? 0 : hits.front()->alloc_instance;
  };
  const AccessSite site{seq, where, program_.site_name(where)};

  std::uint32_t next_pc = frame.pc + 1;


  switch (ins.op) {
    case Opcode::Const:
      set_dest(ins.args[0].imm);
      break;
    case Opcode::Add:
    case Opcode::Sub:
    case Opcode::Mul:
    case Opcode::CmpLe:
    case Opcode::CmpLt:
    case Opcode::CmpEq: {
      const std::int64_t a = arg(0);
      const std::int64_t b = arg(1);
      set_dest(eval_arith(ins.op, a, b));
      break;
    }
    case Opcode::Br: {
      const std::int64_t cond = arg(0);
      next_pc = ins.target_index[cond != 0 ? 0 : 1];
      frame.last_branch[frame.pc] = seq;
      break;
    }
    case Opcode::Jmp:
      next_pc = ins.target_index[0];
      break;
    case Opcode::Call: {
      if (state.frames.size() >= config_.stack_cap) {
        throw Error(ErrorCode::StackOverflow,
                    fmt::format("call depth exceeds {} at {}", config_.stack_cap, site.name));
      }
      std::vector<std::int64_t> values;
      for (std::size_t i = 0; i < ins.args.size(); ++i) values.push_back(arg(i));
      const Function& callee = program_.functions[ins.callee_index];
      Frame next;
      next.fn = ins.callee_index;
      next.id = state.next_frame_id++;
      next.call_seq = seq;
      next.regs.assign(callee.reg_names.size(), std::nullopt);
      next.last_branch.assign(callee.body.size(), 0);
      next.ret_dest = ins.dest;
      for (std::size_t i = 0; i < values.size(); ++i) {
        next.regs[callee.params[i]] = values[i];
        fx.reg_writes.push_back({next.id, callee.params[i]});
      }
      frame.pc = next_pc;  // resume point in the caller
      state.frames.push_back(std::move(next));
      result.entered_call = true;
      break;
    }
    case Opcode::Ret: {
      std::optional<std::int64_t> value;
      if (!ins.args.empty()) value = arg(0);
      const Frame finished = std::move(state.frames.back());
      state.frames.pop_back();
      if (state.record_dependences) state.recorder.drop_frame(finished.id);
      result.returned = true;
      if (state.frames.empty()) {
        state.halted = true;
        result.status = StepStatus::Halted;
      } else if (finished.ret_dest) {
        Frame& caller = state.frames.back();
        caller.regs[*finished.ret_dest] = value.value_or(0);
        fx.reg_writes.push_back({caller.id, *finished.ret_dest});
      }
      break;
    }
    case Opcode::Alloc: {
      const auto size = static_cast<std::uint64_t>(arg(0));
      set_dest(static_cast<std::int64_t>(state.heap.alloc(size, alloc_site(where, seq))));
      break;
    }
    case Opcode::Calloc: {
      const auto count = static_cast<std::uint64_t>(arg(0));
      const auto size = static_cast<std::uint64_t>(arg(1));
      set_dest(static_cast<std::int64_t>(state.heap.calloc(count, size, alloc_site(where, seq))));
      break;
    }
    case Opcode::Realloc: {
      const auto old_base = static_cast<Address>(arg(0));
      const auto size = static_cast<std::uint64_t>(arg(1));
      std::uint64_t old_usable = 0;
      if (const ChunkRecord* old = state.heap.find_by_base(old_base); old && old->live()) {
        old_usable = old->usable;
        fx.provenance = old->alloc_instance;
      }
      const Address fresh = state.heap.realloc(old_base, size, alloc_site(where, seq));
      const std::uint64_t kept = std::min(old_usable, state.heap.find_by_base(fresh)->usable);
      if (kept > 0) {
        fx.mem_reads.push_back({old_base, kept});
        fx.mem_writes.push_back({fresh, kept});
      }
      set_dest(static_cast<std::int64_t>(fresh));
      break;
    }
    case Opcode::Free: {
      const auto base = static_cast<Address>(arg(0));
      if (const ChunkRecord* rec = state.heap.find_by_base(base)) fx.provenance = rec->alloc_instance;
      state.heap.free(base);
      break;
    }
    case Opcode::Store:
    case Opcode::StoreBytes: {
      const auto addr = static_cast<Address>(arg(0));
      std::vector<std::uint8_t> data =
          ins.op == Opcode::Store ? little_endian(arg(1), ins.width) : ins.bytes;
      fx.provenance = provenance(addr, data.size());
      if (auto report = check_store(state.heap, db_, addr, data.size(), ins.prov, site)) {
        result.status = StepStatus::Fault;
        result.report = std::move(report);
        result.suppressed.emplace(addr, std::move(data));
      } else {
        state.heap.write(addr, data);
        fx.mem_writes.push_back({addr, data.size()});
      }
      break;
    }
    case Opcode::Load: {
      const auto addr = static_cast<Address>(arg(0));
      fx.provenance = provenance(addr, ins.width);
      if (auto report = check_load(state.heap, addr, ins.width, site)) {
        result.status = StepStatus::Fault;
        result.report = std::move(report);
      }
      fx.mem_reads.push_back({addr, ins.width});
      set_dest(from_little_endian(state.heap.read(addr, ins.width)));
      break;
    }
    case Opcode::Input: {
      auto value = input.next(state.input_cursor, where);
      if (!value) {
        StepResult need;
        need.status = StepStatus::NeedInput;
        need.where = where;
        return need;
      }
      fx.input = InputUse{*value, state.input_cursor};
      ++state.input_cursor;
      set_dest(*value);
      break;
    }
    case Opcode::ToggleSensitive:
      state.heap.set_sensitive(ins.toggle_on);
      break;
    case Opcode::Print:
      result.printed = arg(0);
      break;
    case Opcode::Halt:
      state.halted = true;
      result.status = StepStatus::Halted;
      break;
  }

  if (!state.halted && !result.entered_call && !result.returned) {
    state.frames.back().pc = next_pc;
  }
  state.last_seq = seq;
  ++state.step_count;
  result.heap_events = state.heap.take_events();
  if (state.record_dependences) state.recorder.record(fx);
  return result;
}

RunOutcome Interpreter::run(MachineState& state, InputSource& input, RunPolicy policy) const {
  RunOutcome out;
  try {
    while (true) {
      StepResult r = step(state, input);
      if (r.printed) out.printed.push_back(*r.printed);
      out.heap_events.insert(out.heap_events.end(), r.heap_events.begin(), r.heap_events.end());
      if (r.status == StepStatus::Halted) break;
      if (r.status == StepStatus::NeedInput) {
        throw Error(ErrorCode::BadInputExhausted,
                    fmt::format("input queue exhausted at {}", program_.site_name(r.where)));
      }
      if (r.status == StepStatus::Fault) {
        out.reports.push_back(*r.report);
        if (policy == RunPolicy::StopAtFirstFault) break;
      }
    }
  } catch (const Error& e) {
    out.status = RunOutcome::Status::Error;
    out.error = e;
    return out;
  }
  out.status = out.reports.empty() ? RunOutcome::Status::CompletedClean
                                   : RunOutcome::Status::Corrupted;
  return out;
}

void Interpreter::apply_suppressed(MachineState& state, Address addr,
                                   const std::vector<std::uint8_t>& bytes) {
  state.heap.write(addr, bytes);
}

}  // namespace heapguard
