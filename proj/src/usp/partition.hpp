// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "numerics/tensor.hpp"
#include "simcomm/mesh.hpp"

namespace uspsim::usp {

// Splits tokens 0..L-1 into 2R contiguous chunks and hands ring rank p the
// pair (p, 2R-1-p). Under a causal mask every rank then owns exactly
// L(L+1)/(2R) of the (q,k) work, instead of the heavily skewed tail a plain
// even split produces.
std::vector<std::vector<int64_t>> zigzag_partition(int64_t seq_len,
                                                   int ring_degree);

// Plain contiguous split, kept for workload comparisons and the non-causal
// path.
std::vector<std::vector<int64_t>> even_partition(int64_t seq_len,
                                                 int ring_degree);

// Causal workload per rank: the number of (q, k) pairs with k <= q where q is
// owned by the rank and k is any token. `assignment` must cover 0..L-1.
std::vector<int64_t> causal_pair_counts(
    const std::vector<std::vector<int64_t>>& assignment, int64_t seq_len);

// How a global sequence is laid out over a U x R mesh: each ring rank's token
// list (zigzag or contiguous) is cut into U equal sub-shards, one per ulysses
// rank, so that the forward all-to-all gather reassembles it in order.
class ShardSpec {
 public:
  ShardSpec(simcomm::ProcessMesh mesh, int64_t seq_len, bool zigzag);

  const simcomm::ProcessMesh& mesh() const { return mesh_; }
  int64_t seq_len() const { return seq_len_; }
  bool zigzag() const { return zigzag_; }
  int64_t tokens_per_rank() const {
    return seq_len_ / (mesh_.ulysses_degree() * mesh_.ring_degree());
  }

  // Original-order index of every token held by `rank`, in storage order.
  std::vector<int64_t> positions_for(int rank) const;

 private:
  simcomm::ProcessMesh mesh_;
  int64_t seq_len_;
  bool zigzag_;
};

// Copies the token rows named by `positions` out of a full-sequence tensor.
template <class T>
numerics::Tensor4<T> extract_rows(const numerics::Tensor4<T>& global,
                                  std::span<const int64_t> positions) {
  numerics::Tensor4<T> shard(global.batch(),
                             static_cast<int64_t>(positions.size()),
                             global.heads(), global.head_size());
  for (int64_t b = 0; b < global.batch(); ++b) {
    for (size_t t = 0; t < positions.size(); ++t) {
      for (int64_t h = 0; h < global.heads(); ++h) {
        const auto src = global.row(b, positions[t], h);
        auto dst = shard.row(b, static_cast<int64_t>(t), h);
        std::copy(src.begin(), src.end(), dst.begin());
      }
    }
  }
  return shard;
}

// Inverse of extract_rows: writes shard rows back at their original indices.
template <class T>
void place_rows(numerics::Tensor4<T>& global, const numerics::Tensor4<T>& shard,
                std::span<const int64_t> positions) {
  for (int64_t b = 0; b < shard.batch(); ++b) {
    for (size_t t = 0; t < positions.size(); ++t) {
      for (int64_t h = 0; h < shard.heads(); ++h) {
        const auto src = shard.row(b, static_cast<int64_t>(t), h);
        auto dst = global.row(b, positions[t], h);
        std::copy(src.begin(), src.end(), dst.begin());
      }
    }
  }
}

}  // namespace uspsim::usp
