#include "heapguard/slicer.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "heapguard/error.hpp"

namespace heapguard {

void DependenceGraph::add(DepNode node) {
  if (node.seq != size() + 1) {
    throw std::invalid_argument("dependence graph: instance " + std::to_string(node.seq) +
                                " out of order (expected " + std::to_string(size() + 1) + ")");
  }
  std::sort(node.data.begin(), node.data.end());
  node.data.erase(std::unique(node.data.begin(), node.data.end()), node.data.end());
  const bool forward_data = !node.data.empty() && (node.data.front() == 0 || node.data.back() >= node.seq);
  if (forward_data || node.control >= node.seq) {
    throw std::invalid_argument("dependence graph: instance " + std::to_string(node.seq) +
                                " has a non-backward edge");
  }
  tail_.push_back(std::move(node));
  if (tail_.size() == kBlock) {
    frozen_.push_back(std::make_shared<const std::vector<DepNode>>(std::move(tail_)));
    tail_ = {};
    tail_.reserve(kBlock);
  }
}

const DepNode& DependenceGraph::node(Seq seq) const {
  if (!contains(seq)) {
    throw Error(ErrorCode::UnknownInstance, "no instruction instance with seq " + std::to_string(seq));
  }
  const std::size_t idx = seq - 1;
  const std::size_t block = idx / kBlock;
  if (block < frozen_.size()) return (*frozen_[block])[idx % kBlock];
  return tail_[idx % kBlock];
}

bool operator==(const DependenceGraph& a, const DependenceGraph& b) {
  if (a.size() != b.size()) return false;
  for (Seq s = 1; s <= a.size(); ++s) {
    if (!(a.node(s) == b.node(s))) return false;
  }
  return true;
}

void DependenceRecorder::record(const InstanceEffects& fx) {
  DepNode node;
  node.seq = fx.seq;
  node.where = fx.where;
  node.op = fx.op;
  node.control = fx.governing;
  node.input = fx.input;
  for (const RegKey& r : fx.reg_reads) {
    if (auto w = last_writer(r)) node.data.push_back(*w);
  }
  for (const MemRange& m : fx.mem_reads) {
    for (std::uint64_t i = 0; i < m.len; ++i) {
      if (auto w = last_writer(m.addr + i)) node.data.push_back(*w);
    }
  }
  if (fx.provenance != 0) node.data.push_back(fx.provenance);
  graph_.add(std::move(node));

  for (const RegKey& r : fx.reg_writes) reg_writer_[key(r)] = fx.seq;
  for (const MemRange& m : fx.mem_writes) {
    for (std::uint64_t i = 0; i < m.len; ++i) byte_writer_[m.addr + i] = fx.seq;
  }
}

void DependenceRecorder::drop_frame(FrameId frame) {
  std::erase_if(reg_writer_, [frame](const auto& kv) { return (kv.first >> 32) == frame; });
}

std::optional<Seq> DependenceRecorder::last_writer(RegKey k) const {
  auto it = reg_writer_.find(key(k));
  if (it == reg_writer_.end()) return std::nullopt;
  return it->second;
}

std::optional<Seq> DependenceRecorder::last_writer(Address addr) const {
  auto it = byte_writer_.find(addr);
  if (it == byte_writer_.end()) return std::nullopt;
  return it->second;
}

bool Slice::contains(Seq seq) const {
  return std::binary_search(members.begin(), members.end(), seq);
}

Slice backward_slice(const DependenceGraph& graph, Seq criterion) {
  (void)graph.node(criterion);
  std::vector<bool> in(graph.size() + 1, false);
  std::vector<Seq> work{criterion};
  in[criterion] = true;
  while (!work.empty()) {
    const DepNode& n = graph.node(work.back());
    work.pop_back();
    auto visit = [&](Seq s) {
      if (s != 0 && !in[s]) {
        in[s] = true;
        work.push_back(s);
      }
    };
    for (Seq s : n.data) visit(s);
    visit(n.control);
  }
  Slice slice;
  slice.criterion = criterion;
  for (Seq s = 1; s < in.size(); ++s) {
    if (in[s]) slice.members.push_back(s);
  }
  return slice;
}

std::optional<RootInput> find_root_input(const Slice& slice, const DependenceGraph& graph) {
  for (auto it = slice.members.rbegin(); it != slice.members.rend(); ++it) {
    const DepNode& n = graph.node(*it);
    if (n.input) return RootInput{n.seq, n.input->value, n.input->cursor, n.where};
  }
  return std::nullopt;
}

}  // namespace heapguard
