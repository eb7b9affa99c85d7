#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <unordered_map>
#include <vector>

#include "heapguard/heap.hpp"
#include "heapguard/program.hpp"

namespace heapguard {

using FrameId = std::uint32_t;

struct InputUse {
  std::int64_t value = 0;
  std::uint64_t cursor = 0;

  friend bool operator==(const InputUse&, const InputUse&) = default;
};

struct DepNode {
  Seq seq = 0;
  InstrRef where;
  Opcode op = Opcode::Halt;
  std::vector<Seq> data;  // sorted, unique, each < seq
  Seq control = 0;        // governing branch (or call) instance; 0 if none
  std::optional<InputUse> input;

  friend bool operator==(const DepNode&, const DepNode&) = default;
};

/// Dynamic dependence graph over instances 1..size(). Completed blocks of
/// nodes are shared between copies, so copying a graph for a snapshot costs
/// one block plus a pointer per block.
class DependenceGraph {
 public:
  /// Nodes must arrive with seq == size() + 1 and only backward edges;
  /// throws std::invalid_argument otherwise.
  void add(DepNode node);

  std::size_t size() const noexcept { return frozen_.size() * kBlock + tail_.size(); }
  bool contains(Seq seq) const noexcept { return seq >= 1 && seq <= size(); }
  /// Throws Error(UnknownInstance).
  const DepNode& node(Seq seq) const;

  friend bool operator==(const DependenceGraph& a, const DependenceGraph& b);

 private:
  static constexpr std::size_t kBlock = 1024;
  std::vector<std::shared_ptr<const std::vector<DepNode>>> frozen_;
  std::vector<DepNode> tail_;
};

struct RegKey {
  FrameId frame = 0;
  RegId reg = 0;
};

struct MemRange {
  Address addr = 0;
  std::uint64_t len = 0;

  friend bool operator==(const MemRange&, const MemRange&) = default;
};

/// Everything one instance read and wrote, as reported by the interpreter.
struct InstanceEffects {
  Seq seq = 0;
  InstrRef where;
  Opcode op = Opcode::Halt;
  std::vector<RegKey> reg_reads;
  std::vector<RegKey> reg_writes;
  std::vector<MemRange> mem_reads;
  std::vector<MemRange> mem_writes;
  Seq provenance = 0;  // allocation instance of the chunk accessed
  Seq governing = 0;
  std::optional<InputUse> input;
};

/// Online trace collection: last-writer maps for registers and heap bytes,
/// feeding the dependence graph.
class DependenceRecorder {
 public:
  void record(const InstanceEffects& effects);
  void drop_frame(FrameId frame);

  const DependenceGraph& graph() const noexcept { return graph_; }
  std::optional<Seq> last_writer(RegKey key) const;
  std::optional<Seq> last_writer(Address addr) const;

  friend bool operator==(const DependenceRecorder&, const DependenceRecorder&) = default;

  const std::unordered_map<std::uint64_t, Seq>& reg_writers() const { return reg_writer_; }
  const std::unordered_map<Address, Seq>& byte_writers() const { return byte_writer_; }

 private:
  static std::uint64_t key(RegKey k) { return (std::uint64_t{k.frame} << 32) | k.reg; }

  DependenceGraph graph_;
  std::unordered_map<std::uint64_t, Seq> reg_writer_;
  std::unordered_map<Address, Seq> byte_writer_;
};

struct Slice {
  Seq criterion = 0;
  std::vector<Seq> members;  // sorted ascending

  bool contains(Seq seq) const;
};

/// Transitive closure over data and control edges from `criterion`.
/// Throws Error(UnknownInstance).
Slice backward_slice(const DependenceGraph& graph, Seq criterion);

struct RootInput {
  Seq seq = 0;
  std::int64_t value = 0;
  std::uint64_t cursor = 0;
  InstrRef site;
};

/// The input instance with the greatest seq in the slice.
std::optional<RootInput> find_root_input(const Slice& slice, const DependenceGraph& graph);

}  // namespace heapguard
