// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include "usp/usp_attention.hpp"

#include <sstream>

namespace uspsim::usp {

namespace {

using numerics::Tensor4;

template <class T>
void check_usp_inputs(const simcomm::ProcessMesh& mesh, const Tensor4<T>& q,
                      const Tensor4<T>& k, const Tensor4<T>& v,
                      std::span<const int64_t> positions) {
  const int ulysses = mesh.ulysses_degree();
  if (k.heads() != v.heads()) {
    throw_invalid("K and V must agree on head count");
  }
  if (k.heads() % ulysses != 0 || ulysses > k.heads()) {
    std::ostringstream os;
    os << "ulysses degree " << ulysses << " exceeds or does not divide the kv "
       << "head count " << k.heads()
       << "; the ulysses degree cannot exceed the number of attention heads";
    throw_constraint(os.str());
  }
  if (q.heads() % ulysses != 0) {
    std::ostringstream os;
    os << "query head count " << q.heads()
       << " is not divisible by the ulysses degree " << ulysses;
    throw_constraint(os.str());
  }
  if (static_cast<int64_t>(positions.size()) != q.seq()) {
    throw_invalid("positions must carry one original index per local token");
  }
}

}  // namespace

template <class T>
UspForward<T> usp_attention(simcomm::RankCtx& ctx,
                            const simcomm::ProcessMesh& mesh,
                            const Tensor4<T>& q, const Tensor4<T>& k,
                            const Tensor4<T>& v,
                            std::span<const int64_t> positions, bool causal) {
  check_usp_inputs(mesh, q, k, v, positions);
  const auto ulysses_pg = mesh.ulysses_group(ctx.rank());
  const auto ring_pg = mesh.ring_group(ctx.rank());

  UspForward<T> fwd;
  fwd.head_positions = gather_positions(ctx, ulysses_pg, positions);
  fwd.q_heads = all_to_all_4d(ctx, ulysses_pg, q, 2, 1);
  fwd.k_heads = all_to_all_4d(ctx, ulysses_pg, k, 2, 1);
  fwd.v_heads = all_to_all_4d(ctx, ulysses_pg, v, 2, 1);

  auto ring = ring_attention(ctx, ring_pg, fwd.q_heads, fwd.k_heads,
                             fwd.v_heads, fwd.head_positions, causal);
  fwd.out_heads = std::move(ring.out);
  fwd.logsumexp = std::move(ring.logsumexp);

  fwd.out = all_to_all_4d(ctx, ulysses_pg, fwd.out_heads, 1, 2);
  return fwd;
}

template <class T>
UspGrads<T> usp_attention_backward(simcomm::RankCtx& ctx,
                                   const simcomm::ProcessMesh& mesh,
                                   const UspForward<T>& fwd,
                                   const Tensor4<T>& dout, bool causal) {
  if (!dout.same_shape(fwd.out)) {
    throw_invalid("dO must be sequence-sharded like the forward output");
  }
  const auto ulysses_pg = mesh.ulysses_group(ctx.rank());
  const auto ring_pg = mesh.ring_group(ctx.rank());

  const auto dout_heads = all_to_all_4d(ctx, ulysses_pg, dout, 2, 1);
  auto ring_grads = ring_attention_backward(
      ctx, ring_pg, fwd.q_heads, fwd.k_heads, fwd.v_heads, fwd.out_heads,
      dout_heads, std::span<const T>(fwd.logsumexp),
      std::span<const int64_t>(fwd.head_positions), causal);

  UspGrads<T> grads;
  grads.dq = all_to_all_4d(ctx, ulysses_pg, ring_grads.dq, 1, 2);
  grads.dk = all_to_all_4d(ctx, ulysses_pg, ring_grads.dk, 1, 2);
  grads.dv = all_to_all_4d(ctx, ulysses_pg, ring_grads.dv, 1, 2);
  return grads;
}

template UspForward<float> usp_attention(simcomm::RankCtx&, const simcomm::ProcessMesh&, const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, std::span<const int64_t>, bool);
template UspForward<double> usp_attention(simcomm::RankCtx&, const simcomm::ProcessMesh&, const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, std::span<const int64_t>, bool);
template UspGrads<float> usp_attention_backward(simcomm::RankCtx&, const simcomm::ProcessMesh&, const UspForward<float>&, const Tensor4<float>&, bool);
template UspGrads<double> usp_attention_backward(simcomm::RankCtx&, const simcomm::ProcessMesh&, const UspForward<double>&, const Tensor4<double>&, bool);

}  // namespace uspsim::usp
