#include <gtest/gtest.h>

#include <random>
#include <set>

#include "heapguard/error.hpp"
#include "heapguard/interp.hpp"
#include "heapguard/slicer.hpp"
#include "support.hpp"

using namespace heapguard;
using heapguard::testing::load_program;

namespace {

DepNode node(Seq seq, std::vector<Seq> data, Seq control = 0,
             std::optional<std::int64_t> input = std::nullopt) {
  DepNode n;
  n.seq = seq;
  n.data = std::move(data);
  n.control = control;
  if (input) {
    n.op = Opcode::Input;
    n.input = InputUse{*input, 0};
  }
  return n;
}

// Reachability by repeated relaxation over the whole edge list.
std::set<Seq> closure_oracle(const std::vector<DepNode>& nodes, Seq criterion) {
  std::set<Seq> in{criterion};
  bool grew = true;
  while (grew) {
    grew = false;
    for (const DepNode& n : nodes) {
      if (in.count(n.seq) == 0) continue;
      std::vector<Seq> preds = n.data;
      if (n.control != 0) preds.push_back(n.control);
      for (Seq p : preds) grew |= in.insert(p).second;
    }
  }
  return in;
}

}  // namespace

TEST(Slicer, ChainAndDiamond) {
  DependenceGraph g;
  g.add(node(1, {}, 0, 5));
  g.add(node(2, {1}));
  g.add(node(3, {}));
  g.add(node(4, {2}, 3));
  g.add(node(5, {3}));
  const Slice s = backward_slice(g, 4);
  EXPECT_EQ(s.members, (std::vector<Seq>{1, 2, 3, 4}));
  EXPECT_FALSE(s.contains(5));
  EXPECT_EQ(backward_slice(g, 5).members, (std::vector<Seq>{3, 5}));
  const auto root = find_root_input(s, g);
  ASSERT_TRUE(root);
  EXPECT_EQ(root->seq, 1u);
  EXPECT_EQ(root->value, 5);
  EXPECT_FALSE(find_root_input(backward_slice(g, 5), g));
}

TEST(Slicer, RejectsForwardEdgesAndUnknownInstances) {
  DependenceGraph g;
  EXPECT_THROW(g.add(node(2, {})), std::invalid_argument);
  g.add(node(1, {}));
  EXPECT_THROW(g.add(node(2, {2})), std::invalid_argument);
  try {
    backward_slice(g, 9);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnknownInstance);
  }
}

TEST(Slicer, RootInputIsLatestInputInSlice) {
  DependenceGraph g;
  g.add(node(1, {}, 0, 10));
  g.add(node(2, {}, 0, 20));
  g.add(node(3, {}, 0, 30));
  g.add(node(4, {1, 2}));
  const auto root = find_root_input(backward_slice(g, 4), g);
  ASSERT_TRUE(root);
  EXPECT_EQ(root->seq, 2u);
  EXPECT_EQ(root->value, 20);
}

TEST(SlicerProperty, MatchesTransitiveClosureOnRandomGraphs) {
  std::mt19937_64 rng(4242);
  for (int trial = 0; trial < 200; ++trial) {
    const Seq n = 1 + rng() % 50;
    DependenceGraph g;
    std::vector<DepNode> nodes;
    for (Seq s = 1; s <= n; ++s) {
      std::set<Seq> data;
      if (s > 1) {
        const int k = static_cast<int>(rng() % 4);
        for (int i = 0; i < k; ++i) data.insert(1 + rng() % (s - 1));
      }
      const Seq control = s > 1 && rng() % 3 == 0 ? 1 + rng() % (s - 1) : 0;
      std::optional<std::int64_t> input;
      if (rng() % 5 == 0) input = static_cast<std::int64_t>(s * 7);
      DepNode d = node(s, {data.begin(), data.end()}, control, input);
      nodes.push_back(d);
      g.add(d);
    }
    // Copies share frozen blocks but must compare equal.
    const DependenceGraph copy = g;
    EXPECT_EQ(copy, g);
    for (Seq c = 1; c <= n; ++c) {
      const std::set<Seq> expect = closure_oracle(nodes, c);
      const Slice s = backward_slice(g, c);
      EXPECT_EQ(std::set<Seq>(s.members.begin(), s.members.end()), expect);
      EXPECT_TRUE(std::is_sorted(s.members.begin(), s.members.end()));
      std::optional<Seq> latest;
      for (Seq m : expect) {
        if (nodes[m - 1].input) latest = m;
      }
      const auto root = find_root_input(s, g);
      EXPECT_EQ(root.has_value(), latest.has_value());
      if (root && latest) EXPECT_EQ(root->seq, *latest);
    }
  }
}

TEST(Slicer, OffByOneFaultSliceReachesTheLoopBoundInput) {
  const Program p = load_program("off_by_one.mp");
  const Interpreter interp(p, nullptr);
  MachineState state = interp.initial_state(HeapConfig{});
  QueueInput input({128});
  const RunOutcome out = interp.run(state, input, RunPolicy::StopAtFirstFault);
  ASSERT_EQ(out.reports.size(), 1u);
  const Seq fault = out.reports[0].instr.seq;
  const DependenceGraph& g = state.recorder.graph();
  ASSERT_TRUE(g.contains(fault));
  const Slice s = backward_slice(g, fault);
  std::set<std::string> labels;
  for (Seq m : s.members) labels.insert(p.functions[0].body[g.node(m).where.index].label);
  for (const char* expected : {"L0", "L2", "L9", "L10", "L11", "L12", "L13"}) {
    EXPECT_EQ(labels.count(expected), 1u) << expected;
  }
  // The null check on the second buffer governs the loop, so its
  // allocation is in the slice; the print is not.
  EXPECT_EQ(labels.count("L1"), 1u);
  EXPECT_EQ(labels.count("L3"), 0u);
  const auto root = find_root_input(s, g);
  ASSERT_TRUE(root);
  EXPECT_EQ(root->value, 128);
  EXPECT_EQ(root->cursor, 0u);
  EXPECT_EQ(p.site_name(root->site), "main:L2");
}

TEST(Slicer, HeapBytesCarryDependences) {
  const Program p = parse_program(R"(
fn main {
  L0: r1 = alloc 16
  L1: r2 = input
  L2: store8 r1 r2
  L3: r3 = const 0
  L4: store8 r1 r3
  L5: r4 = load8 r1
  L6: halt
}
)");
  const Interpreter interp(p, nullptr);
  MachineState state = interp.initial_state(HeapConfig{});
  QueueInput input({9});
  interp.run(state, input, RunPolicy::StopAtFirstFault);
  const DependenceGraph& g = state.recorder.graph();
  // The load's value comes from the second store, not the input.
  const Slice s = backward_slice(g, 6);
  EXPECT_EQ(g.node(6).where.index, 5u);
  EXPECT_FALSE(find_root_input(s, g));
  EXPECT_TRUE(s.contains(5));
  EXPECT_FALSE(s.contains(3));
}
