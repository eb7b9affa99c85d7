#pragma once

#include <cstdint>
#include <functional>
#include <list>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "heapguard/events.hpp"
#include "heapguard/impact.hpp"
#include "heapguard/interp.hpp"

namespace heapguard {

struct Snapshot {
  std::uint64_t id = 0;
  /// Instance of the call that entered the function; 0 for main's entry.
  Seq taken_at_seq = 0;
  std::string fn;
  std::string call_path;
  MachineState state;
};

/// Deep copy of `state` taken at the entry of its innermost frame.
Snapshot take_snapshot(const MachineState& state, const Program& program, Seq taken_at_seq,
                       std::uint64_t id = 0);
MachineState restore(const Snapshot& snapshot);

/// Keeps main's entry snapshot pinned, plus the most recent snapshot per
/// call path; when more than `cap` paths are held, the least recently seen
/// path is evicted. The pinned snapshot does not count toward the cap.
class SnapshotStore {
 public:
  explicit SnapshotStore(std::size_t cap = 16) : cap_(cap) {}

  void pin(Snapshot snapshot);
  void take(Snapshot snapshot);

  bool has_pinned() const noexcept { return pinned_.has_value(); }
  const Snapshot& pinned() const;
  /// Greatest taken_at_seq strictly below root_input_seq; the pinned
  /// snapshot when there is no root input or nothing earlier qualifies.
  const Snapshot& select(std::optional<Seq> root_input_seq) const;
  /// Forgets snapshots taken after `seq` (their futures were abandoned).
  void drop_newer_than(Seq seq);

  const Snapshot* find(const std::string& call_path) const;
  /// Unpinned snapshots, least recently seen first.
  std::vector<const Snapshot*> retained() const;
  std::size_t size() const noexcept { return lru_.size() + (pinned_ ? 1 : 0); }
  std::size_t cap() const noexcept { return cap_; }

 private:
  std::size_t cap_;
  std::optional<Snapshot> pinned_;
  std::list<Snapshot> lru_;
};

/// Where replacement input values come from once the consumed timeline runs
/// out: the remaining batch queue or an interactive prompt.
using InputFeed = std::function<std::optional<std::int64_t>()>;

InputFeed queue_feed(std::vector<std::int64_t> values);

/// Input source for a recovery session. Replays values already consumed on
/// the current timeline, except those rejected at the requesting site; past
/// a rejected value the timeline is cut and fresh values are drawn from the
/// feed, skipping any that were rejected at that site.
class SessionInput final : public InputSource {
 public:
  explicit SessionInput(InputFeed feed) : feed_(std::move(feed)) {}

  std::optional<std::int64_t> next(std::uint64_t cursor, InstrRef site) override;

  void mark_bad(InstrRef site, std::int64_t value) { bad_[site].insert(value); }
  bool is_bad(InstrRef site, std::int64_t value) const;
  const std::vector<std::int64_t>& timeline() const noexcept { return timeline_; }
  /// True if a value was drawn from the feed since the last call.
  bool take_served_fresh() {
    const bool v = served_fresh_;
    served_fresh_ = false;
    return v;
  }

 private:
  InputFeed feed_;
  std::vector<std::int64_t> timeline_;
  std::map<InstrRef, std::set<std::int64_t>> bad_;
  bool served_fresh_ = false;
};

struct SessionConfig {
  HeapConfig heap;
  bool sensitive_at_start = false;
  std::size_t snapshot_cap = 16;
  /// Functions whose entry is snapshotted; empty optional means all.
  std::optional<std::set<std::string>> snapshot_fns;
  ImpactConfig impact;
  bool report_all_faults = false;
  std::uint32_t max_attempts = 8;
};

struct DecisionRecord {
  CorruptionReport report;
  RecoveryDecision decision = RecoveryDecision::Recover;
  bool speculated = false;
  std::optional<ImpactVerdict> verdict;
};

struct SessionOutcome {
  enum class Status { Completed, Failed };
  Status status = Status::Completed;
  std::vector<Event> events;
  std::vector<DecisionRecord> decisions;
  std::uint32_t restores = 0;
  std::optional<Error> error;
  std::vector<std::int64_t> timeline;
  /// "seq fn:label opcode" lines for the slice of the first analyzed fault.
  std::vector<std::string> slice_dump;
  std::vector<std::uint64_t> snapshot_ids;
};

using EventSink = std::function<void(const Event&)>;

/// Runs the program to completion, detecting corruption at every access,
/// deciding recovery and restoring snapshots with replacement inputs.
/// Events are appended to the outcome and, if given, passed to `sink` as
/// they are finalized.
SessionOutcome orchestrate(const Interpreter& interp, InputFeed feed, const SessionConfig& config,
                           const EventSink& sink = {});

/// Node of `fn` where a recovered run counts as past all of `faulting`: the
/// nearest common post-dominator from which none of them is reachable.
std::optional<std::uint32_t> good_input_point(const FunctionAnalysis& analysis,
                                              const std::set<std::uint32_t>& faulting);

}  // namespace heapguard
