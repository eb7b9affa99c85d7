#include <gtest/gtest.h>

#include <limits>
#include <random>

#include "heapguard/error.hpp"
#include "heapguard/interp.hpp"
#include "support.hpp"

using namespace heapguard;
using heapguard::testing::load_program;

namespace {

constexpr std::int64_t kMin = std::numeric_limits<std::int64_t>::min();
constexpr std::int64_t kMax = std::numeric_limits<std::int64_t>::max();

RunOutcome run_program(const Program& p, std::vector<std::int64_t> inputs,
                       RunPolicy policy = RunPolicy::ContinuePastFaults, MachineState* out = nullptr) {
  const Interpreter interp(p, nullptr);
  MachineState state = interp.initial_state(HeapConfig{});
  QueueInput input(std::move(inputs));
  RunOutcome r = interp.run(state, input, policy);
  if (out != nullptr) *out = state;
  return r;
}

ErrorCode run_error(const std::string& text, std::vector<std::int64_t> inputs = {},
                    InterpConfig config = {}) {
  const Program p = parse_program(text);
  const Interpreter interp(p, nullptr, config);
  MachineState state = interp.initial_state(HeapConfig{});
  QueueInput input(std::move(inputs));
  const RunOutcome r = interp.run(state, input, RunPolicy::ContinuePastFaults);
  EXPECT_EQ(r.status, RunOutcome::Status::Error);
  return r.error ? r.error->code() : ErrorCode::ParseError;
}

}  // namespace

TEST(Interp, EvalArithExamples) {
  EXPECT_EQ(eval_arith(Opcode::Add, 2, 3), 5);
  EXPECT_EQ(eval_arith(Opcode::Sub, 2, 3), -1);
  EXPECT_EQ(eval_arith(Opcode::Mul, -4, 3), -12);
  EXPECT_EQ(eval_arith(Opcode::Add, kMax, 1), kMin);
  EXPECT_EQ(eval_arith(Opcode::Sub, kMin, 1), kMax);
  EXPECT_EQ(eval_arith(Opcode::CmpLe, 3, 3), 1);
  EXPECT_EQ(eval_arith(Opcode::CmpLt, 3, 3), 0);
  EXPECT_EQ(eval_arith(Opcode::CmpEq, -1, -1), 1);
  EXPECT_THROW(eval_arith(Opcode::Br, 0, 0), std::invalid_argument);
}

TEST(InterpProperty, ArithmeticWrapsLikeUnsigned) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 10000; ++i) {
    const std::uint64_t a = rng();
    const std::uint64_t b = rng();
    const auto sa = static_cast<std::int64_t>(a);
    const auto sb = static_cast<std::int64_t>(b);
    EXPECT_EQ(static_cast<std::uint64_t>(eval_arith(Opcode::Add, sa, sb)), a + b);
    EXPECT_EQ(static_cast<std::uint64_t>(eval_arith(Opcode::Mul, sa, sb)), a * b);
    EXPECT_EQ(eval_arith(Opcode::CmpLt, sa, sb) + eval_arith(Opcode::CmpLe, sb, sa), 1);
  }
}

TEST(Interp, OffByOneReportsTwoOverflowsAtEachBoundary) {
  const Program p = load_program("off_by_one.mp");
  const RunOutcome bad = run_program(p, {128});
  EXPECT_EQ(bad.status, RunOutcome::Status::Corrupted);
  ASSERT_EQ(bad.reports.size(), 2u);
  EXPECT_EQ(bad.reports[0].fault_addr, 0x2088090u);
  EXPECT_EQ(bad.reports[1].fault_addr, 0x2088120u);
  EXPECT_EQ(bad.reports[0].instr.name, "main:L12");
  EXPECT_EQ(bad.reports[1].instr.name, "main:L19");
  EXPECT_EQ(bad.printed, (std::vector<std::int64_t>{128}));

  const RunOutcome good = run_program(p, {56});
  EXPECT_EQ(good.status, RunOutcome::Status::CompletedClean);
  EXPECT_TRUE(good.reports.empty());
  // Two allocation inserts, then for each free one remove and one insert.
  EXPECT_EQ(good.heap_events.size(), 6u);
}

TEST(Interp, FaultingStoreIsNotApplied) {
  const Program p = load_program("off_by_one.mp");
  const Interpreter interp(p, nullptr);
  MachineState state = interp.initial_state(HeapConfig{});
  QueueInput input({128});
  const std::vector<std::uint8_t> before = state.heap.read(0x2088080, 0);
  StepResult last;
  do {
    last = interp.step(state, input);
  } while (last.status == StepStatus::Continue);
  ASSERT_EQ(last.status, StepStatus::Fault);
  ASSERT_TRUE(last.suppressed);
  EXPECT_EQ(last.suppressed->first, 0x2088090u);
  EXPECT_EQ(last.suppressed->second, (std::vector<std::uint8_t>{0x41}));
  // The next chunk's header byte still holds its size field.
  EXPECT_EQ(state.heap.byte_at(0x2088098), 0x91);
  EXPECT_EQ(state.heap.byte_at(0x2088090), 0x00);
}

TEST(InterpProperty, DeterministicAndCopiesAreIndependent) {
  const Program p = load_program("off_by_one.mp");
  const Interpreter interp(p, nullptr);
  for (std::int64_t n : {0, 5, 56, 127, 128, 200}) {
    MachineState a = interp.initial_state(HeapConfig{});
    MachineState b = interp.initial_state(HeapConfig{});
    QueueInput ia({n});
    QueueInput ib({n});
    const RunOutcome ra = interp.run(a, ia, RunPolicy::ContinuePastFaults);
    const RunOutcome rb = interp.run(b, ib, RunPolicy::ContinuePastFaults);
    EXPECT_EQ(ra.printed, rb.printed);
    EXPECT_EQ(ra.heap_events, rb.heap_events);
    EXPECT_EQ(ra.reports.size(), rb.reports.size());
    EXPECT_EQ(serialize_state(a), serialize_state(b));
  }

  // Stepping a copy leaves the original untouched.
  MachineState original = interp.initial_state(HeapConfig{});
  QueueInput input({56});
  for (int i = 0; i < 20; ++i) interp.step(original, input);
  const std::string frozen = serialize_state(original);
  MachineState copy = original;
  QueueInput more({56});
  interp.run(copy, more, RunPolicy::ContinuePastFaults);
  EXPECT_EQ(serialize_state(original), frozen);
  EXPECT_NE(serialize_state(copy), frozen);
}

TEST(Interp, HaltOnlyProgram) {
  const Program p = parse_program("fn main {\n  L0: halt\n}\n");
  MachineState state;
  const RunOutcome r = run_program(p, {}, RunPolicy::StopAtFirstFault, &state);
  EXPECT_EQ(r.status, RunOutcome::Status::CompletedClean);
  EXPECT_TRUE(state.halted);
  EXPECT_EQ(state.last_seq, 1u);
}

TEST(Interp, CallsReturnValuesAndCallPath) {
  const Program p = parse_program(R"(
fn twice(r1) {
  T0: r2 = add r1 r1
  T1: ret r2
}
fn main {
  L0: r1 = call twice 21
  L1: print r1
  L2: halt
}
)");
  const Interpreter interp(p, nullptr);
  MachineState state = interp.initial_state(HeapConfig{});
  QueueInput input({});
  EXPECT_EQ(state.call_path(p), "main");
  const StepResult call = interp.step(state, input);
  EXPECT_TRUE(call.entered_call);
  EXPECT_EQ(state.call_path(p), "main>twice");
  const RunOutcome r = interp.run(state, input, RunPolicy::StopAtFirstFault);
  EXPECT_EQ(r.printed, (std::vector<std::int64_t>{42}));
}

TEST(Interp, RuntimeErrors) {
  EXPECT_EQ(run_error("fn main {\n L0: r1 = const 0\n L1: r1 = add r1 1\n L2: r2 = cmp_lt r1 1000\n"
                      " L3: br r2 L1 L4\n L4: halt\n}\n",
                      {}, {50, 256}),
            ErrorCode::StepBudgetExceeded);
  EXPECT_EQ(run_error("fn f {\n F0: call f\n F1: ret\n}\nfn main {\n L0: call f\n L1: halt\n}\n"),
            ErrorCode::StackOverflow);
  EXPECT_EQ(run_error("fn main {\n L0: print r9\n L1: halt\n}\n"), ErrorCode::UndefinedRegister);
  EXPECT_EQ(run_error("fn main {\n L0: r1 = alloc 16\n L1: free r1\n L2: free r1\n L3: halt\n}\n"),
            ErrorCode::DoubleFree);
  EXPECT_EQ(run_error("fn main {\n L0: r1 = input\n L1: halt\n}\n"), ErrorCode::BadInputExhausted);
}

TEST(Interp, UseAfterFreeAndLoadFaults) {
  const Program p = parse_program(R"(
fn main {
  L0: r1 = alloc 16
  L1: r2 = alloc 16
  L2: free r1
  L3: store1 r1 7
  L4: r3 = load8 r2
  L5: r4 = add r2 12
  L6: r5 = load8 r4
  L7: halt
}
)");
  const RunOutcome r = run_program(p, {});
  ASSERT_EQ(r.reports.size(), 2u);
  EXPECT_EQ(r.reports[0].kind, CorruptionKind::UseAfterFree);
  EXPECT_EQ(r.reports[1].kind, CorruptionKind::InterChunk);
  EXPECT_EQ(r.reports[1].direction, AccessDirection::Read);
}

TEST(Interp, IntraChunkNeedsTypeDb) {
  const Program p = load_program("goaty.mp");
  const TypeDb db = parse_typedb(heapguard::testing::read_file(heapguard::testing::bundled("goaty.tdb")));
  const Interpreter interp(p, &db);
  MachineState state = interp.initial_state(HeapConfig{});
  QueueInput input({});
  const RunOutcome r = interp.run(state, input, RunPolicy::ContinuePastFaults);
  ASSERT_EQ(r.reports.size(), 1u);
  EXPECT_EQ(r.reports[0].kind, CorruptionKind::IntraChunk);
  EXPECT_EQ(r.reports[0].fault_addr, 0x2088018u);
  EXPECT_EQ(r.printed, (std::vector<std::int64_t>{0}));
  EXPECT_THROW(Interpreter(p, nullptr), Error);
}
