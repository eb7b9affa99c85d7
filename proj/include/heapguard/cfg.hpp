#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "heapguard/program.hpp"

namespace heapguard {

/// Successor graph over instruction indices 0..n-1 plus a virtual exit sink
/// at index n. Built from a function, or by hand in tests.
struct Cfg {
  std::vector<std::vector<std::uint32_t>> succ;  // size n + 1; succ[exit] is empty
  std::uint32_t exit = 0;

  std::size_t size() const { return succ.size(); }
  std::vector<std::vector<std::uint32_t>> predecessors() const;
};

/// br -> two successors, jmp -> one, ret/halt -> exit, others fall through.
Cfg build_cfg(const Function& fn);

/// Nodes from which the exit sink is unreachable.
std::vector<std::uint32_t> nodes_not_reaching_exit(const Cfg& cfg);

/// ipdom[n] for every node; ipdom[exit] == exit. Requires every node to
/// reach the exit.
std::vector<std::uint32_t> post_dominators(const Cfg& cfg);

/// cd[n] = branch nodes n is control dependent on: b has a successor that n
/// post-dominates, and n does not post-dominate b.
std::vector<std::set<std::uint32_t>> control_dependence(const Cfg& cfg,
                                                        const std::vector<std::uint32_t>& ipdom);

/// Number of DFS back edges from node 0 (the natural loops of a reducible
/// function).
std::size_t count_back_edges(const Cfg& cfg);

}  // namespace heapguard
