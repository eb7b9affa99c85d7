#include "heapguard/recovery.hpp"

#include <algorithm>
#include <deque>

#include <fmt/format.h>

#include "heapguard/error.hpp"
#include "heapguard/slicer.hpp"

namespace heapguard {

Snapshot take_snapshot(const MachineState& state, const Program& program, Seq taken_at_seq,
                       std::uint64_t id) {
  Snapshot s;
  s.id = id;
  s.taken_at_seq = taken_at_seq;
  s.fn = state.frames.empty() ? std::string{} : program.functions[state.frames.back().fn].name;
  s.call_path = state.call_path(program);
  s.state = state;
  return s;
}

MachineState restore(const Snapshot& snapshot) { return snapshot.state; }

void SnapshotStore::pin(Snapshot snapshot) { pinned_ = std::move(snapshot); }

void SnapshotStore::take(Snapshot snapshot) {
  auto same = std::find_if(lru_.begin(), lru_.end(),
                           [&](const Snapshot& s) { return s.call_path == snapshot.call_path; });
  if (same != lru_.end()) lru_.erase(same);
  lru_.push_back(std::move(snapshot));
  while (lru_.size() > cap_) lru_.pop_front();
}

const Snapshot& SnapshotStore::pinned() const {
  if (!pinned_) throw std::logic_error("no pinned snapshot");
  return *pinned_;
}

const Snapshot& SnapshotStore::select(std::optional<Seq> root_input_seq) const {
  const Snapshot* best = &pinned();
  if (!root_input_seq) return *best;
  for (const Snapshot& s : lru_) {
    if (s.taken_at_seq < *root_input_seq && s.taken_at_seq > best->taken_at_seq) best = &s;
  }
  return *best;
}

void SnapshotStore::drop_newer_than(Seq seq) {
  lru_.remove_if([seq](const Snapshot& s) { return s.taken_at_seq > seq; });
}

const Snapshot* SnapshotStore::find(const std::string& call_path) const {
  if (pinned_ && pinned_->call_path == call_path) return &*pinned_;
  for (const Snapshot& s : lru_) {
    if (s.call_path == call_path) return &s;
  }
  return nullptr;
}

std::vector<const Snapshot*> SnapshotStore::retained() const {
  std::vector<const Snapshot*> out;
  for (const Snapshot& s : lru_) out.push_back(&s);
  return out;
}

InputFeed queue_feed(std::vector<std::int64_t> values) {
  auto queue = std::make_shared<std::deque<std::int64_t>>(values.begin(), values.end());
  return [queue]() -> std::optional<std::int64_t> {
    if (queue->empty()) return std::nullopt;
    const std::int64_t v = queue->front();
    queue->pop_front();
    return v;
  };
}

bool SessionInput::is_bad(InstrRef site, std::int64_t value) const {
  auto it = bad_.find(site);
  return it != bad_.end() && it->second.count(value) != 0;
}

std::optional<std::int64_t> SessionInput::next(std::uint64_t cursor, InstrRef site) {
  if (cursor < timeline_.size()) {
    if (!is_bad(site, timeline_[cursor])) return timeline_[cursor];
    timeline_.resize(cursor);
  }
  while (true) {
    std::optional<std::int64_t> v = feed_ ? feed_() : std::nullopt;
    if (!v) return std::nullopt;
    if (is_bad(site, *v)) continue;
    timeline_.push_back(*v);
    served_fresh_ = true;
    return v;
  }
}

std::optional<std::uint32_t> good_input_point(const FunctionAnalysis& analysis,
                                              const std::set<std::uint32_t>& faulting) {
  if (faulting.empty()) return std::nullopt;
  const Cfg& cfg = analysis.cfg;
  const auto& ipdom = analysis.ipdom;
  auto post_dominates = [&](std::uint32_t p, std::uint32_t x) {
    for (std::uint32_t n = ipdom[x];; n = ipdom[n]) {
      if (n == p) return true;
      if (n == cfg.exit) return false;
    }
  };
  auto reaches_fault = [&](std::uint32_t from) {
    std::vector<bool> seen(cfg.size(), false);
    std::vector<std::uint32_t> work{from};
    seen[from] = true;
    while (!work.empty()) {
      const std::uint32_t n = work.back();
      work.pop_back();
      if (faulting.count(n)) return true;
      for (std::uint32_t s : cfg.succ[n]) {
        if (!seen[s]) {
          seen[s] = true;
          work.push_back(s);
        }
      }
    }
    return false;
  };
  for (std::uint32_t n = ipdom[*faulting.begin()]; n != cfg.exit; n = ipdom[n]) {
    const bool covers = std::all_of(faulting.begin(), faulting.end(),
                                    [&](std::uint32_t f) { return post_dominates(n, f); });
    if (covers && !reaches_fault(n)) return n;
  }
  return std::nullopt;
}

namespace {

bool is_decision_or_report(const Event& e) {
  return std::holds_alternative<ReportEvent>(e) || std::holds_alternative<ContinueEvent>(e) ||
         std::holds_alternative<RestoreEvent>(e);
}

class Session {
 public:
  Session(const Interpreter& interp, InputFeed feed, const SessionConfig& config,
          const EventSink& sink)
      : interp_(interp),
        program_(interp.program()),
        config_(config),
        sink_(sink),
        input_(std::move(feed)),
        store_(config.snapshot_cap) {}

  SessionOutcome run() {
    state_ = interp_.initial_state(config_.heap, config_.sensitive_at_start);
    store_.pin(take_snapshot(state_, program_, 0, next_id_++));
    outcome_.snapshot_ids.push_back(store_.pinned().id);
    try {
      loop();
    } catch (const Error& e) {
      flush_buffer();
      outcome_.status = SessionOutcome::Status::Failed;
      outcome_.error = e;
    }
    outcome_.timeline = input_.timeline();
    return std::move(outcome_);
  }

 private:
  struct PendingFault {
    CorruptionReport report;
    RecoveryDecision decision;
  };

  void loop() {
    while (true) {
      StepResult r = interp_.step(state_, input_);
      if (r.status == StepStatus::NeedInput) {
        throw Error(ErrorCode::BadInputExhausted,
                    fmt::format("no acceptable input left for {}", program_.site_name(r.where)));
      }
      if (input_.take_served_fresh()) quiet_until_ = 0;
      const bool quiet = r.seq != 0 && r.seq < quiet_until_;

      if (r.entered_call) maybe_snapshot(r.seq);
      for (const HeapEvent& h : r.heap_events) emit(TableEvent{h}, quiet);
      if (r.printed) emit(PrintEvent{*r.printed}, quiet);
      if (r.status == StepStatus::Fault) handle_fault(r, quiet);
      if (r.status == StepStatus::Halted) {
        if (finish()) return;
        continue;
      }
      check_good_input();
    }
  }

  void maybe_snapshot(Seq seq) {
    const std::string& fn = program_.functions[state_.frames.back().fn].name;
    if (config_.snapshot_fns && !config_.snapshot_fns->count(fn)) return;
    store_.take(take_snapshot(state_, program_, seq, next_id_++));
    outcome_.snapshot_ids.push_back(next_id_ - 1);
  }

  void handle_fault(const StepResult& r, bool quiet) {
    const CorruptionReport& report = *r.report;
    DecisionRecord record;
    record.report = report;
    if (report.target_sensitive) {
      record.decision = RecoveryDecision::Recover;
    } else {
      std::vector<CorruptedByte> bytes;
      if (r.suppressed) bytes = corrupted_bytes(r.suppressed->first, r.suppressed->second);
      record.verdict = speculative_continue(interp_, state_, bytes, r.seq, input_.timeline(),
                                            config_.impact);
      record.speculated = true;
      record.decision = decide_recovery(report, record.verdict);
    }
    outcome_.decisions.push_back(record);
    emit(ReportEvent{report}, quiet);

    if (record.decision == RecoveryDecision::LogAndContinue) {
      emit(ContinueEvent{r.seq, report.instr.name, record.verdict->budget_exhausted}, quiet);
      if (config_.report_all_faults) start_buffering();
      return;
    }
    if (config_.report_all_faults) {
      pending_.push_back({report, record.decision});
      start_buffering();
      return;
    }
    recover({report});
  }

  void start_buffering() { buffering_ = true; }

  /// Returns true when the session is over.
  bool finish() {
    if (!pending_.empty()) {
      std::vector<CorruptionReport> reports;
      for (const PendingFault& p : pending_) reports.push_back(p.report);
      pending_.clear();
      buffer_.clear();
      buffering_ = false;
      recover(reports);
      return false;
    }
    flush_buffer();
    if (!good_emitted_) emit(GoodInputEvent{}, false);
    emit(make_dump(state_.heap), false);
    outcome_.status = SessionOutcome::Status::Completed;
    return true;
  }

  void recover(const std::vector<CorruptionReport>& reports) {
    const CorruptionReport& first = reports.front();
    const Seq fault_seq = first.instr.seq;
    const DependenceGraph& graph = state_.recorder.graph();
    const Slice slice = backward_slice(graph, fault_seq);
    if (outcome_.slice_dump.empty()) {
      for (Seq s : slice.members) {
        const DepNode& n = graph.node(s);
        outcome_.slice_dump.push_back(
            fmt::format("{} {} {}", s, program_.site_name(n.where), opcode_name(n.op)));
      }
    }
    const std::optional<RootInput> root = find_root_input(slice, graph);
    if (root) input_.mark_bad(root->site, root->value);

    if (++attempts_ > config_.max_attempts) {
      throw Error(ErrorCode::BadInputExhausted,
                  fmt::format("gave up after {} restores at {}", config_.max_attempts,
                              first.instr.name));
    }
    const Snapshot& snap = store_.select(root ? std::optional(root->seq) : std::nullopt);
    RestoreEvent ev;
    ev.call_path = snap.call_path;
    ev.snapshot_seq = snap.taken_at_seq;
    ev.fault_seq = fault_seq;
    if (root) {
      ev.bad_value = root->value;
      ev.input_site = program_.site_name(root->site);
    }
    emit(ev, false);

    std::set<std::uint32_t> faulting;
    for (const CorruptionReport& r : reports) {
      if (r.instr.where.fn == first.instr.where.fn) faulting.insert(r.instr.where.index);
    }
    good_fn_ = first.instr.where.fn;
    good_node_ = good_input_point(interp_.analysis(good_fn_), faulting);
    good_emitted_ = false;

    state_ = restore(snap);
    const Seq restored_at = snap.taken_at_seq;
    store_.drop_newer_than(restored_at);
    quiet_until_ = root ? root->seq : fault_seq;
    ++outcome_.restores;
  }

  void check_good_input() {
    if (good_emitted_ || !good_node_ || state_.frames.empty()) return;
    const Frame& top = state_.frames.back();
    if (top.fn == good_fn_ && top.pc == *good_node_) emit(GoodInputEvent{}, false);
  }

  void emit(Event e, bool quiet) {
    if (quiet) return;
    if (!prologue_emitted_ && !std::holds_alternative<TableEvent>(e)) {
      prologue_emitted_ = true;
      deliver(SnapshotEvent{"main", 0});
    }
    if (std::holds_alternative<GoodInputEvent>(e)) good_emitted_ = true;
    if (buffering_ && !is_decision_or_report(e)) {
      buffer_.push_back(std::move(e));
      return;
    }
    deliver(std::move(e));
  }

  void flush_buffer() {
    buffering_ = false;
    for (Event& e : buffer_) deliver(std::move(e));
    buffer_.clear();
  }

  void deliver(Event e) {
    if (sink_) sink_(e);
    outcome_.events.push_back(std::move(e));
  }

  const Interpreter& interp_;
  const Program& program_;
  const SessionConfig& config_;
  const EventSink& sink_;
  SessionInput input_;
  SnapshotStore store_;
  MachineState state_;
  SessionOutcome outcome_;
  std::uint64_t next_id_ = 1;
  std::uint32_t attempts_ = 0;
  Seq quiet_until_ = 0;
  bool prologue_emitted_ = false;
  bool buffering_ = false;
  std::vector<Event> buffer_;
  std::vector<PendingFault> pending_;
  std::uint32_t good_fn_ = 0;
  std::optional<std::uint32_t> good_node_;
  bool good_emitted_ = false;
};

}  // namespace

SessionOutcome orchestrate(const Interpreter& interp, InputFeed feed, const SessionConfig& config,
                           const EventSink& sink) {
  Session session(interp, std::move(feed), config, sink);
  return session.run();
}

}  // namespace heapguard
