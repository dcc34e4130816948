// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include "simcomm/ledger.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "common/error.hpp"

namespace uspsim::simcomm {

const char* collective_name(CollectiveKind kind) {
  switch (kind) {
    case CollectiveKind::kAllReduce: return "all_reduce";
    case CollectiveKind::kAllGather: return "all_gather";
    case CollectiveKind::kReduceScatter: return "reduce_scatter";
    case CollectiveKind::kAllToAll: return "all_to_all";
    case CollectiveKind::kRingShift: return "ring_shift";
  }
  return "unknown";
}

double collective_send_bytes(CollectiveKind kind, int group_size,
                             double payload_bytes) {
  if (group_size < 1) throw_invalid("group size must be >= 1");
  const double n = group_size;
  switch (kind) {
    case CollectiveKind::kAllReduce: return payload_bytes * 2 * (n - 1) / n;
    case CollectiveKind::kAllGather:
    case CollectiveKind::kReduceScatter:
    case CollectiveKind::kAllToAll: return payload_bytes * (n - 1) / n;
    case CollectiveKind::kRingShift: return group_size > 1 ? payload_bytes : 0;
  }
  return 0;
}

void CommLedger::record(LedgerEntry entry) {
  std::lock_guard<std::mutex> lock(mu_);
  entries_.emplace(std::make_pair(entry.group, entry.step), std::move(entry));
}

std::vector<LedgerEntry> CommLedger::entries() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<LedgerEntry> out;
  out.reserve(entries_.size());
  for (const auto& [key, e] : entries_) out.push_back(e);
  return out;
}

int64_t CommLedger::event_count(CollectiveKind kind) const {
  std::lock_guard<std::mutex> lock(mu_);
  int64_t n = 0;
  for (const auto& [key, e] : entries_) n += e.kind == kind ? 1 : 0;
  return n;
}

double CommLedger::total_bytes(CollectiveKind kind) const {
  std::lock_guard<std::mutex> lock(mu_);
  double total = 0;
  for (const auto& [key, e] : entries_) {
    if (e.kind != kind) continue;
    for (double b : e.bytes_sent) total += b;
  }
  return total;
}

double CommLedger::rank_bytes(CollectiveKind kind, int global_rank) const {
  std::lock_guard<std::mutex> lock(mu_);
  double total = 0;
  for (const auto& [key, e] : entries_) {
    if (e.kind != kind) continue;
    for (size_t i = 0; i < e.members.size(); ++i) {
      if (e.members[i] == global_rank) total += e.bytes_sent[i];
    }
  }
  return total;
}

namespace {

std::string format_bytes(double b) {
  if (b == std::floor(b) && std::abs(b) < 9.0e15) {
    return std::to_string(static_cast<int64_t>(b));
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", b);
  return buf;
}

}  // namespace

std::string CommLedger::to_csv() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::ostringstream os;
  os << "step,collective,group,rank,bytes\n";
  for (const auto& [key, e] : entries_) {
    for (size_t i = 0; i < e.members.size(); ++i) {
      os << e.step << ',' << collective_name(e.kind) << ",\"" << e.group
         << "\"," << e.members[i] << ',' << format_bytes(e.bytes_sent[i])
         << '\n';
    }
  }
  return os.str();
}

}  // namespace uspsim::simcomm
