#include "heapguard/cfg.hpp"

#include <algorithm>
#include <functional>

namespace heapguard {

std::vector<std::vector<std::uint32_t>> Cfg::predecessors() const {
  std::vector<std::vector<std::uint32_t>> pred(succ.size());
  for (std::uint32_t n = 0; n < succ.size(); ++n) {
    for (std::uint32_t s : succ[n]) pred[s].push_back(n);
  }
  return pred;
}

Cfg build_cfg(const Function& fn) {
  const auto n = static_cast<std::uint32_t>(fn.body.size());
  Cfg cfg;
  cfg.exit = n;
  cfg.succ.assign(n + 1, {});
  for (std::uint32_t i = 0; i < n; ++i) {
    const Instruction& ins = fn.body[i];
    auto& out = cfg.succ[i];
    switch (ins.op) {
      case Opcode::Br:
        out.push_back(ins.target_index[0]);
        if (ins.target_index[1] != ins.target_index[0]) out.push_back(ins.target_index[1]);
        break;
      case Opcode::Jmp:
        out.push_back(ins.target_index[0]);
        break;
      case Opcode::Ret:
      case Opcode::Halt:
        out.push_back(n);
        break;
      default:
        // Validation guarantees a terminator ends the body; a trailing
        // non-terminator would fall into the sink.
        out.push_back(i + 1 < n ? i + 1 : n);
        break;
    }
  }
  return cfg;
}

std::vector<std::uint32_t> nodes_not_reaching_exit(const Cfg& cfg) {
  const auto pred = cfg.predecessors();
  std::vector<bool> seen(cfg.size(), false);
  std::vector<std::uint32_t> work{cfg.exit};
  seen[cfg.exit] = true;
  while (!work.empty()) {
    const std::uint32_t n = work.back();
    work.pop_back();
    for (std::uint32_t p : pred[n]) {
      if (!seen[p]) {
        seen[p] = true;
        work.push_back(p);
      }
    }
  }
  std::vector<std::uint32_t> out;
  for (std::uint32_t n = 0; n < cfg.size(); ++n) {
    if (!seen[n]) out.push_back(n);
  }
  return out;
}

// Cooper, Harvey & Kennedy's iterative dominator algorithm run on the
// reversed graph, rooted at the exit sink.
std::vector<std::uint32_t> post_dominators(const Cfg& cfg) {
  const std::size_t n = cfg.size();
  constexpr std::uint32_t kUndef = ~std::uint32_t{0};

  // Reverse post-order of the reversed graph (DFS from exit over preds).
  const auto pred = cfg.predecessors();
  std::vector<std::uint32_t> order;
  std::vector<std::uint32_t> po_num(n, kUndef);
  {
    std::vector<bool> seen(n, false);
    std::vector<std::pair<std::uint32_t, std::size_t>> stack{{cfg.exit, 0}};
    seen[cfg.exit] = true;
    while (!stack.empty()) {
      auto& [node, next] = stack.back();
      if (next < pred[node].size()) {
        const std::uint32_t p = pred[node][next++];
        if (!seen[p]) {
          seen[p] = true;
          stack.emplace_back(p, 0);
        }
      } else {
        po_num[node] = static_cast<std::uint32_t>(order.size());
        order.push_back(node);
        stack.pop_back();
      }
    }
  }

  std::vector<std::uint32_t> ipdom(n, kUndef);
  ipdom[cfg.exit] = cfg.exit;
  auto intersect = [&](std::uint32_t a, std::uint32_t b) {
    while (a != b) {
      while (po_num[a] < po_num[b]) a = ipdom[a];
      while (po_num[b] < po_num[a]) b = ipdom[b];
    }
    return a;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      const std::uint32_t node = *it;
      if (node == cfg.exit) continue;
      std::uint32_t best = kUndef;
      // In the reversed graph, a node's predecessors are its CFG successors.
      for (std::uint32_t s : cfg.succ[node]) {
        if (ipdom[s] == kUndef) continue;
        best = best == kUndef ? s : intersect(s, best);
      }
      if (best != kUndef && ipdom[node] != best) {
        ipdom[node] = best;
        changed = true;
      }
    }
  }
  return ipdom;
}

std::vector<std::set<std::uint32_t>> control_dependence(const Cfg& cfg,
                                                        const std::vector<std::uint32_t>& ipdom) {
  std::vector<std::set<std::uint32_t>> cd(cfg.size());
  for (std::uint32_t b = 0; b < cfg.size(); ++b) {
    if (cfg.succ[b].size() < 2) continue;
    for (std::uint32_t s : cfg.succ[b]) {
      // Everything on the post-dominator tree path from s up to (excluding)
      // ipdom(b) post-dominates s but not b. b itself post-dominates b.
      for (std::uint32_t runner = s; runner != ipdom[b]; runner = ipdom[runner]) {
        if (runner != b) cd[runner].insert(b);
        if (runner == cfg.exit) break;
      }
    }
  }
  return cd;
}

std::size_t count_back_edges(const Cfg& cfg) {
  if (cfg.size() == 0) return 0;
  enum class Color { White, Grey, Black };
  std::vector<Color> color(cfg.size(), Color::White);
  std::size_t back = 0;
  std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
  color[0] = Color::Grey;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < cfg.succ[node].size()) {
      const std::uint32_t s = cfg.succ[node][next++];
      if (color[s] == Color::Grey) {
        ++back;
      } else if (color[s] == Color::White) {
        color[s] = Color::Grey;
        stack.emplace_back(s, 0);
      }
    } else {
      color[node] = Color::Black;
      stack.pop_back();
    }
  }
  return back;
}

}  // namespace heapguard
