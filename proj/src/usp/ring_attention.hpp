// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "numerics/attention.hpp"
#include "simcomm/world.hpp"

namespace uspsim::usp {

template <class T>
struct RingAttentionResult {
  numerics::Tensor4<T> out;
  std::vector<T> logsumexp;  // (b*seq + t)*heads + h, needed by the backward
};

template <class T>
struct RingGrads {
  numerics::Tensor4<T> dq, dk, dv;
};

// Load-balanced ring attention over one ring group. Every rank holds equal
// query/key/value shards; K and V circulate around the ring for R steps, with
// rank r folding in the block that originated at ring rank (r - t) mod R at
// step t. The final step skips the redundant shift, so each circulated tensor
// is sent exactly R-1 times. `positions` are the original token indices of
// the local shard and drive the causal mask; the key-side lists are shared
// once over the ring with a small metadata all_gather.
template <class T>
RingAttentionResult<T> ring_attention(simcomm::RankCtx& ctx,
                                      const simcomm::ProcessGroup& ring_group,
                                      const numerics::Tensor4<T>& q,
                                      const numerics::Tensor4<T>& k,
                                      const numerics::Tensor4<T>& v,
                                      std::span<const int64_t> positions,
                                      bool causal);

// Backward pass with the logsumexp-recompute strategy: block probabilities
// are rebuilt from the forward logsumexp, never stored. K/V circulate again,
// and partial dK/dV for each visiting block circulate with them; a block
// owner's own contribution stays local, so the partials also travel exactly
// R-1 hops before arriving home.
template <class T>
RingGrads<T> ring_attention_backward(
    simcomm::RankCtx& ctx, const simcomm::ProcessGroup& ring_group,
    const numerics::Tensor4<T>& q, const numerics::Tensor4<T>& k,
    const numerics::Tensor4<T>& v, const numerics::Tensor4<T>& out,
    const numerics::Tensor4<T>& dout, std::span<const T> logsumexp,
    std::span<const int64_t> positions, bool causal);

extern template RingAttentionResult<float> ring_attention(simcomm::RankCtx&, const simcomm::ProcessGroup&, const numerics::Tensor4<float>&, const numerics::Tensor4<float>&, const numerics::Tensor4<float>&, std::span<const int64_t>, bool);
extern template RingAttentionResult<double> ring_attention(simcomm::RankCtx&, const simcomm::ProcessGroup&, const numerics::Tensor4<double>&, const numerics::Tensor4<double>&, const numerics::Tensor4<double>&, std::span<const int64_t>, bool);
extern template RingGrads<float> ring_attention_backward(simcomm::RankCtx&, const simcomm::ProcessGroup&, const numerics::Tensor4<float>&, const numerics::Tensor4<float>&, const numerics::Tensor4<float>&, const numerics::Tensor4<float>&, const numerics::Tensor4<float>&, std::span<const float>, std::span<const int64_t>, bool);
extern template RingGrads<double> ring_attention_backward(simcomm::RankCtx&, const simcomm::ProcessGroup&, const numerics::Tensor4<double>&, const numerics::Tensor4<double>&, const numerics::Tensor4<double>&, const numerics::Tensor4<double>&, const numerics::Tensor4<double>&, std::span<const double>, std::span<const int64_t>, bool);

}  // namespace uspsim::usp
