// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "numerics/tensor.hpp"
#include "simcomm/world.hpp"

namespace uspsim::usp {

// Redistribution that swaps which of the sequence/head axes is sharded over a
// ulysses group. Axes are numbered 0=batch, 1=sequence, 2=heads, 3=head_size.
//
// Forward mode (scatter_idx=2, gather_idx=1) turns a sequence shard
// (bs, T, H, hs) into a head shard (bs, n*T, H/n, hs): group member u keeps
// global heads [u*H/n, (u+1)*H/n) and received sub-shards concatenate along
// the sequence axis in source-rank order. Backward mode (scatter_idx=1,
// gather_idx=2) is the exact inverse; composing the two is a bitwise
// round-trip.
template <class T>
numerics::Tensor4<T> all_to_all_4d(simcomm::RankCtx& ctx,
                                   const simcomm::ProcessGroup& group,
                                   const numerics::Tensor4<T>& in,
                                   int scatter_idx, int gather_idx);

// Sequence metadata follows the data: forward mode concatenates everyone's
// position lists in source-rank order.
std::vector<int64_t> gather_positions(simcomm::RankCtx& ctx,
                                      const simcomm::ProcessGroup& group,
                                      std::span<const int64_t> positions);

// Backward-mode counterpart; a pure local slice, each member keeps its own
// chunk of the gathered list.
std::vector<int64_t> split_positions(const simcomm::ProcessGroup& group,
                                     int global_rank,
                                     std::span<const int64_t> positions);

extern template numerics::Tensor4<float> all_to_all_4d(simcomm::RankCtx&, const simcomm::ProcessGroup&, const numerics::Tensor4<float>&, int, int);
extern template numerics::Tensor4<double> all_to_all_4d(simcomm::RankCtx&, const simcomm::ProcessGroup&, const numerics::Tensor4<double>&, int, int);

}  // namespace uspsim::usp
