// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include "usp/partition.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace uspsim::usp {

std::vector<std::vector<int64_t>> zigzag_partition(int64_t seq_len,
                                                   int ring_degree) {
  if (ring_degree < 1) throw_invalid("ring degree must be >= 1");
  if (seq_len % (2 * ring_degree) != 0) {
    std::ostringstream os;
    os << "sequence length " << seq_len << " is not divisible by 2*ring = "
       << 2 * ring_degree << " as the zigzag partition requires";
    throw_constraint(os.str());
  }
  const int64_t chunk = seq_len / (2 * ring_degree);
  std::vector<std::vector<int64_t>> per_rank(
      static_cast<size_t>(ring_degree));
  for (int p = 0; p < ring_degree; ++p) {
    auto& tokens = per_rank[static_cast<size_t>(p)];
    tokens.reserve(static_cast<size_t>(2 * chunk));
    const int64_t lo_base = chunk * p;
    const int64_t hi_base = chunk * (2 * ring_degree - 1 - p);
    for (int64_t i = 0; i < chunk; ++i) tokens.push_back(lo_base + i);
    for (int64_t i = 0; i < chunk; ++i) tokens.push_back(hi_base + i);
  }
  return per_rank;
}

std::vector<std::vector<int64_t>> even_partition(int64_t seq_len,
                                                 int ring_degree) {
  if (ring_degree < 1) throw_invalid("ring degree must be >= 1");
  if (seq_len % ring_degree != 0) {
    throw_constraint("sequence length is not divisible by the ring degree");
  }
  const int64_t chunk = seq_len / ring_degree;
  std::vector<std::vector<int64_t>> per_rank(
      static_cast<size_t>(ring_degree));
  for (int p = 0; p < ring_degree; ++p) {
    auto& tokens = per_rank[static_cast<size_t>(p)];
    tokens.resize(static_cast<size_t>(chunk));
    std::iota(tokens.begin(), tokens.end(), chunk * p);
  }
  return per_rank;
}

std::vector<int64_t> causal_pair_counts(
    const std::vector<std::vector<int64_t>>& assignment, int64_t seq_len) {
  std::vector<char> seen(static_cast<size_t>(seq_len), 0);
  std::vector<int64_t> counts;
  counts.reserve(assignment.size());
  for (const auto& tokens : assignment) {
    int64_t pairs = 0;
    for (int64_t q : tokens) {
      if (q < 0 || q >= seq_len || seen[static_cast<size_t>(q)]) {
        throw_invalid("assignment must cover 0..L-1 exactly once");
      }
      seen[static_cast<size_t>(q)] = 1;
      pairs += q + 1;  // keys 0..q
    }
    counts.push_back(pairs);
  }
  for (char s : seen) {
    if (!s) throw_invalid("assignment must cover 0..L-1 exactly once");
  }
  return counts;
}

ShardSpec::ShardSpec(simcomm::ProcessMesh mesh, int64_t seq_len, bool zigzag)
    : mesh_(mesh), seq_len_(seq_len), zigzag_(zigzag) {
  const int ring = mesh_.ring_degree();
  const int ulysses = mesh_.ulysses_degree();
  if (zigzag_ && seq_len_ % (2 * ring) != 0) {
    std::ostringstream os;
    os << "sequence length " << seq_len_ << " is not divisible by 2*ring = "
       << 2 * ring << " as the zigzag partition requires";
    throw_constraint(os.str());
  }
  if (seq_len_ % ring != 0) {
    throw_constraint("sequence length is not divisible by the ring degree");
  }
  if ((seq_len_ / ring) % ulysses != 0) {
    std::ostringstream os;
    os << "per-ring-rank token count " << seq_len_ / ring
       << " is not divisible by the ulysses degree " << ulysses;
    throw_constraint(os.str());
  }
}

std::vector<int64_t> ShardSpec::positions_for(int rank) const {
  const int u = mesh_.ulysses_coord(rank);
  const int r = mesh_.ring_coord(rank);
  const auto ring_tokens = zigzag_
                               ? zigzag_partition(seq_len_, mesh_.ring_degree())
                               : even_partition(seq_len_, mesh_.ring_degree());
  const auto& mine = ring_tokens[static_cast<size_t>(r)];
  const int64_t per_rank = tokens_per_rank();
  const auto from = mine.begin() + u * per_rank;
  return std::vector<int64_t>(from, from + per_rank);
}

}  // namespace uspsim::usp
