// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "simcomm/mesh.hpp"
#include "usp/all_to_all_4d.hpp"
#include "usp/ring_attention.hpp"

namespace uspsim::usp {

template <class T>
struct UspForward {
  numerics::Tensor4<T> out;  // sequence-sharded, same layout as the inputs

  // Saved activations consumed by the backward pass, all head-sharded.
  numerics::Tensor4<T> q_heads, k_heads, v_heads, out_heads;
  std::vector<T> logsumexp;
  std::vector<int64_t> head_positions;
};

template <class T>
struct UspGrads {
  numerics::Tensor4<T> dq, dk, dv;  // sequence-sharded
};

// Unified sequence-parallel attention over a U x R mesh: Q, K, V arrive
// sequence-sharded, get swapped to head shards with all_to_all_4d over the
// ulysses group, run through load-balanced ring attention over the ring
// group, and the output is swapped back. The forward issues four all-to-all
// collectives (Q, K, V in, O out); the backward mirrors them (dO in, dQ, dK,
// dV out) for eight per attention layer in total.
//
// The ulysses degree must divide the kv head count: kv heads redistribute by
// kv_hc/U, query heads by hc/U, so a mesh with U > kv_hc has nothing to give
// some ranks and is rejected outright rather than silently replicated.
template <class T>
UspForward<T> usp_attention(simcomm::RankCtx& ctx,
                            const simcomm::ProcessMesh& mesh,
                            const numerics::Tensor4<T>& q,
                            const numerics::Tensor4<T>& k,
                            const numerics::Tensor4<T>& v,
                            std::span<const int64_t> positions, bool causal);

template <class T>
UspGrads<T> usp_attention_backward(simcomm::RankCtx& ctx,
                                   const simcomm::ProcessMesh& mesh,
                                   const UspForward<T>& fwd,
                                   const numerics::Tensor4<T>& dout,
                                   bool causal);

extern template UspForward<float> usp_attention(simcomm::RankCtx&, const simcomm::ProcessMesh&, const numerics::Tensor4<float>&, const numerics::Tensor4<float>&, const numerics::Tensor4<float>&, std::span<const int64_t>, bool);
extern template UspForward<double> usp_attention(simcomm::RankCtx&, const simcomm::ProcessMesh&, const numerics::Tensor4<double>&, const numerics::Tensor4<double>&, const numerics::Tensor4<double>&, std::span<const int64_t>, bool);
extern template UspGrads<float> usp_attention_backward(simcomm::RankCtx&, const simcomm::ProcessMesh&, const UspForward<float>&, const numerics::Tensor4<float>&, bool);
extern template UspGrads<double> usp_attention_backward(simcomm::RankCtx&, const simcomm::ProcessMesh&, const UspForward<double>&, const numerics::Tensor4<double>&, bool);

}  // namespace uspsim::usp
