#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "heapguard/cfg.hpp"
#include "heapguard/detector.hpp"
#include "heapguard/error.hpp"
#include "heapguard/heap.hpp"
#include "heapguard/program.hpp"
#include "heapguard/slicer.hpp"
#include "heapguard/typedb.hpp"

namespace heapguard {

struct Frame {
  std::uint32_t fn = 0;
  std::uint32_t pc = 0;
  FrameId id = 0;
  /// Instance of the call that created this frame; 0 for main.
  Seq call_seq = 0;
  std::vector<std::optional<std::int64_t>> regs;
  /// Caller register receiving the return value.
  std::optional<RegId> ret_dest;
  /// Latest instance of each branch instruction executed in this frame.
  std::vector<Seq> last_branch;

  friend bool operator==(const Frame&, const Frame&) = default;
};

/// Complete, self-contained execution state; copies evolve independently.
struct MachineState {
  Heap heap;
  std::vector<Frame> frames;
  std::uint64_t input_cursor = 0;
  std::uint64_t step_count = 0;
  Seq last_seq = 0;
  FrameId next_frame_id = 1;
  bool halted = false;
  bool record_dependences = true;
  DependenceRecorder recorder;

  /// "main>f>g"
  std::string call_path(const Program& program) const;

  friend bool operator==(const MachineState&, const MachineState&) = default;
};

/// Canonical JSON text of every field of the state.
std::string serialize_state(const MachineState& state);

/// Supplies the value for the `cursor`-th input instruction of a timeline.
class InputSource {
 public:
  virtual ~InputSource() = default;
  virtual std::optional<std::int64_t> next(std::uint64_t cursor, InstrRef site) = 0;
};

/// Plain queue: the cursor indexes the list.
class QueueInput final : public InputSource {
 public:
  explicit QueueInput(std::vector<std::int64_t> values) : values_(std::move(values)) {}
  std::optional<std::int64_t> next(std::uint64_t cursor, InstrRef) override {
    if (cursor >= values_.size()) return std::nullopt;
    return values_[cursor];
  }

 private:
  std::vector<std::int64_t> values_;
};

enum class StepStatus { Continue, Halted, Fault, NeedInput };

struct OperandValue {
  std::optional<RegKey> reg;  // empty for immediates
  std::int64_t value = 0;
};

struct StepResult {
  StepStatus status = StepStatus::Continue;
  Seq seq = 0;
  InstrRef where;
  std::vector<HeapEvent> heap_events;
  std::optional<std::int64_t> printed;
  std::optional<CorruptionReport> report;
  /// Bytes a faulting store would have written; never applied by step().
  std::optional<std::pair<Address, std::vector<std::uint8_t>>> suppressed;
  bool entered_call = false;
  bool returned = false;
  /// Operands in instruction order, with the registers they came from.
  std::vector<OperandValue> operands;
  InstanceEffects effects;
};

struct InterpConfig {
  std::uint64_t step_budget = 1'000'000;
  std::uint32_t stack_cap = 256;
};

struct FunctionAnalysis {
  Cfg cfg;
  std::vector<std::uint32_t> ipdom;
  std::vector<std::set<std::uint32_t>> cd;
};

enum class RunPolicy { StopAtFirstFault, ContinuePastFaults };

struct RunOutcome {
  enum class Status { CompletedClean, Corrupted, Error };
  Status status = Status::CompletedClean;
  std::vector<CorruptionReport> reports;
  std::vector<std::int64_t> printed;
  std::vector<HeapEvent> heap_events;
  std::optional<Error> error;
};

/// Two's-complement wrapping arithmetic; comparisons yield 1 or 0.
std::int64_t eval_arith(Opcode op, std::int64_t a, std::int64_t b);

class Interpreter {
 public:
  /// The program (and typedb, if any) must outlive the interpreter.
  Interpreter(const Program& program, const TypeDb* db, InterpConfig config = {});

  MachineState initial_state(const HeapConfig& heap, bool sensitive_at_start = false) const;

  /// Executes one instruction instance. Faulting stores are detected before
  /// any byte is written and are not applied. Throws Error for
  /// StepBudgetExceeded, StackOverflow, UndefinedRegister and heap misuse.
  StepResult step(MachineState& state, InputSource& input) const;

  /// Steps until halt, or until the first fault under StopAtFirstFault.
  /// Faulting writes are skipped under ContinuePastFaults.
  RunOutcome run(MachineState& state, InputSource& input, RunPolicy policy) const;

  /// Writes bytes a faulting store withheld (used on speculative copies).
  static void apply_suppressed(MachineState& state, Address addr,
                               const std::vector<std::uint8_t>& bytes);

  const Program& program() const noexcept { return program_; }
  const TypeDb* typedb() const noexcept { return db_; }
  const FunctionAnalysis& analysis(std::uint32_t fn) const { return analyses_[fn]; }
  const InterpConfig& config() const noexcept { return config_; }

 private:
  std::int64_t read_operand(const MachineState& state, const Frame& frame, const Operand& op,
                            StepResult& result) const;
  Seq governing_instance(const Frame& frame, std::uint32_t index) const;
  AllocSite alloc_site(InstrRef ref, Seq seq) const;

  const Program& program_;
  const TypeDb* db_;
  InterpConfig config_;
  SiteTypes site_types_;
  std::vector<FunctionAnalysis> analyses_;
};

}  // namespace heapguard
