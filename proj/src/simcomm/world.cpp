// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include "simcomm/world.hpp"

#include <algorithm>
#include <condition_variable>
#include <exception>
#include <mutex>
#include <thread>

namespace uspsim::simcomm {

ProcessGroup::ProcessGroup(std::vector<int> members)
    : members_(std::move(members)) {
  if (members_.empty()) throw_invalid("process group must not be empty");
  std::ostringstream os;
  for (size_t i = 0; i < members_.size(); ++i) {
    if (members_[i] < 0) throw_invalid("process group ranks must be >= 0");
    for (size_t j = 0; j < i; ++j) {
      if (members_[j] == members_[i]) {
        throw_invalid("process group members must be distinct");
      }
    }
    if (i > 0) os << ',';
    os << members_[i];
  }
  key_ = os.str();
}

bool ProcessGroup::contains(int global_rank) const {
  return std::find(members_.begin(), members_.end(), global_rank) !=
         members_.end();
}

int ProcessGroup::local_index(int global_rank) const {
  auto it = std::find(members_.begin(), members_.end(), global_rank);
  if (it == members_.end()) {
    std::ostringstream os;
    os << "rank " << global_rank << " is not a member of group [" << key_
       << "]";
    throw_invalid(os.str());
  }
  return static_cast<int>(it - members_.begin());
}

namespace detail {

// Thrown into ranks that must unwind because the world already failed; the
// original diagnostic is reported from run_spmd, not from these.
struct WorldAbort {};

struct Slot {
  CollectiveKind kind{};
  std::string signature;
  int first_rank = -1;
  std::vector<std::any> inputs;
  std::vector<std::any> outputs;
  int arrived = 0;
  int reads = 0;
  bool done = false;
  Combine combine;
};

struct WorldState {
  enum class RankStatus { kRunning, kBlocked, kFinished };

  explicit WorldState(int n)
      : world_size(n),
        status(static_cast<size_t>(n), RankStatus::kRunning),
        where(static_cast<size_t>(n)),
        waiting_slot(static_cast<size_t>(n), nullptr) {}

  int world_size;
  std::mutex mu;
  std::condition_variable cv;
  CommLedger ledger;
  std::vector<RankStatus> status;
  std::vector<std::string> where;          // last call site while blocked
  std::vector<const Slot*> waiting_slot;   // slot a blocked rank waits on
  bool failed = false;
  std::string failure;
  std::map<std::pair<std::string, int64_t>, Slot> slots;

  // Requires mu held. A rank is stuck only if the slot it waits on cannot
  // complete anymore; a rank whose slot is already done just has not been
  // scheduled yet and will make progress. If every rank is stuck or finished,
  // report which call each stuck rank is sitting in.
  void check_stuck() {
    int blocked = 0, finished = 0;
    for (size_t r = 0; r < status.size(); ++r) {
      if (status[r] == RankStatus::kBlocked) {
        if (waiting_slot[r] != nullptr && waiting_slot[r]->done) return;
        blocked++;
      } else if (status[r] == RankStatus::kFinished) {
        finished++;
      }
    }
    if (blocked == 0 || blocked + finished != world_size) return;
    std::ostringstream os;
    os << "collective deadlock:";
    for (int r = 0; r < world_size; ++r) {
      os << (r ? ";" : "") << " rank " << r << ' ';
      if (status[static_cast<size_t>(r)] == RankStatus::kBlocked) {
        os << "blocked at " << where[static_cast<size_t>(r)];
      } else {
        os << "finished";
      }
    }
    failed = true;
    failure = os.str();
    cv.notify_all();
  }
};

}  // namespace detail

int RankCtx::world_size() const { return state_->world_size; }

std::any RankCtx::collective(const ProcessGroup& g, CollectiveKind kind,
                             std::string signature, int64_t payload_elems,
                             double payload_bytes, std::any input,
                             detail::Combine combine) {
  using detail::WorldState;
  for (int m : g.members()) {
    if (m >= state_->world_size) {
      std::ostringstream os;
      os << "group [" << g.key() << "] exceeds world size "
         << state_->world_size;
      throw_invalid(os.str());
    }
  }
  const int li = g.local_index(rank_);
  const int n = g.size();
  const int64_t seq = group_seq_[g.key()]++;

  std::ostringstream site;
  site << signature << " call #" << seq << " on group [" << g.key() << "]";
  const std::string call_site = site.str();

  std::unique_lock<std::mutex> lock(state_->mu);
  if (state_->failed) throw detail::WorldAbort{};

  auto& slot = state_->slots[{g.key(), seq}];
  if (slot.arrived == 0) {
    slot.kind = kind;
    slot.signature = signature;
    slot.first_rank = rank_;
    slot.inputs.resize(static_cast<size_t>(n));
    slot.outputs.resize(static_cast<size_t>(n));
    slot.combine = std::move(combine);
  } else if (slot.signature != signature) {
    const int a = std::min(rank_, slot.first_rank);
    const int b = std::max(rank_, slot.first_rank);
    const std::string& sig_a = a == rank_ ? signature : slot.signature;
    const std::string& sig_b = b == rank_ ? signature : slot.signature;
    std::ostringstream os;
    os << "collective mismatch on group [" << g.key() << "] call #" << seq
       << ": rank " << a << " called " << sig_a << " but rank " << b
       << " called " << sig_b;
    state_->failed = true;
    state_->failure = os.str();
    state_->cv.notify_all();
    throw Error(ErrorCode::kCommMismatch, os.str());
  }

  slot.inputs[static_cast<size_t>(li)] = std::move(input);
  slot.arrived++;

  if (slot.arrived == n) {
    slot.combine(slot.inputs, slot.outputs);
    slot.done = true;
    LedgerEntry entry;
    entry.kind = kind;
    entry.group = g.key();
    entry.members = g.members();
    entry.step = seq;
    entry.payload_elems = payload_elems;
    entry.bytes_sent.assign(static_cast<size_t>(n),
                            collective_send_bytes(kind, n, payload_bytes));
    state_->ledger.record(std::move(entry));
    auto out = std::move(slot.outputs[static_cast<size_t>(li)]);
    slot.reads++;
    if (slot.reads == n) {
      state_->slots.erase({g.key(), seq});
    }
    state_->cv.notify_all();
    return out;
  }

  state_->status[static_cast<size_t>(rank_)] = WorldState::RankStatus::kBlocked;
  state_->where[static_cast<size_t>(rank_)] = call_site;
  state_->waiting_slot[static_cast<size_t>(rank_)] = &slot;
  state_->check_stuck();
  state_->cv.wait(lock, [&] { return slot.done || state_->failed; });
  state_->status[static_cast<size_t>(rank_)] = WorldState::RankStatus::kRunning;
  state_->waiting_slot[static_cast<size_t>(rank_)] = nullptr;
  if (!slot.done) throw detail::WorldAbort{};

  auto out = std::move(slot.outputs[static_cast<size_t>(li)]);
  slot.reads++;
  if (slot.reads == n) {
    state_->slots.erase({g.key(), seq});
  }
  return out;
}

CommLedger World::run_spmd(int world_size,
                           const std::function<void(RankCtx&)>& program) {
  if (world_size < 1) throw_invalid("world size must be >= 1");

  detail::WorldState state(world_size);
  std::vector<int> all(static_cast<size_t>(world_size));
  for (int r = 0; r < world_size; ++r) all[static_cast<size_t>(r)] = r;
  const ProcessGroup world_group(all);

  std::vector<std::exception_ptr> errors(static_cast<size_t>(world_size));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<size_t>(world_size));

  for (int r = 0; r < world_size; ++r) {
    threads.emplace_back([&, r] {
      RankCtx ctx(&state, r, world_group);
      try {
        program(ctx);
      } catch (const detail::WorldAbort&) {
        // unwound after another rank already failed the world
      } catch (...) {
        errors[static_cast<size_t>(r)] = std::current_exception();
      }
      std::lock_guard<std::mutex> lock(state.mu);
      state.status[static_cast<size_t>(r)] =
          detail::WorldState::RankStatus::kFinished;
      state.check_stuck();
    });
  }
  for (auto& t : threads) t.join();

  for (int r = 0; r < world_size; ++r) {
    if (errors[static_cast<size_t>(r)]) {
      std::rethrow_exception(errors[static_cast<size_t>(r)]);
    }
  }
  if (state.failed) throw Error(ErrorCode::kCommMismatch, state.failure);
  return std::move(state.ledger);
}

}  // namespace uspsim::simcomm
