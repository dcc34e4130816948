// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

namespace uspsim::simcomm {

enum class CollectiveKind {
  kAllReduce,
  kAllGather,
  kReduceScatter,
  kAllToAll,
  kRingShift,
};

const char* collective_name(CollectiveKind kind);

// Per-rank bytes a collective puts on the wire, following the ring-algorithm
// closed forms. `payload_bytes` is the full logical tensor: input size for
// all_reduce/reduce_scatter, concatenated output for all_gather, the whole
// part set for all_to_all (self-part excluded from the count), and
// buffer*steps for ring_shift. Singleton groups communicate nothing.
double collective_send_bytes(CollectiveKind kind, int group_size,
                             double payload_bytes);

struct LedgerEntry {
  CollectiveKind kind;
  std::string group;             // canonical member list, e.g. "0,1,2,3"
  std::vector<int> members;      // global ranks in group order
  int64_t step = 0;              // per-group collective sequence number
  int64_t payload_elems = 0;     // per-rank logical payload, in elements
  std::vector<double> bytes_sent;  // per member, group order
};

// Append-only record of every collective a World executed. Entries are keyed
// by (group, step), so iteration order does not depend on thread scheduling.
class CommLedger {
 public:
  CommLedger() = default;
  CommLedger(CommLedger&& o) noexcept {
    std::lock_guard<std::mutex> lock(o.mu_);
    entries_ = std::move(o.entries_);
  }
  CommLedger& operator=(CommLedger&& o) noexcept {
    if (this != &o) {
      std::scoped_lock lock(mu_, o.mu_);
      entries_ = std::move(o.entries_);
    }
    return *this;
  }

  void record(LedgerEntry entry);

  std::vector<LedgerEntry> entries() const;

  int64_t event_count(CollectiveKind kind) const;
  double total_bytes(CollectiveKind kind) const;
  double rank_bytes(CollectiveKind kind, int global_rank) const;

  // Columns: step, collective, group, rank, bytes. Rows sorted by
  // (group, step, rank).
  std::string to_csv() const;

 private:
  mutable std::mutex mu_;
  std::map<std::pair<std::string, int64_t>, LedgerEntry> entries_;
};

}  // namespace uspsim::simcomm
