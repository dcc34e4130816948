// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include "usp/ring_attention.hpp"

namespace uspsim::usp {

namespace {

using numerics::BlockMask;
using numerics::Tensor4;

template <class T>
Tensor4<T> shift_once(simcomm::RankCtx& ctx, const simcomm::ProcessGroup& g,
                      const Tensor4<T>& t) {
  Tensor4<T> out(t.batch(), t.seq(), t.heads(), t.head_size());
  out.data() = ctx.ring_shift<T>(g, t.data());
  return out;
}

template <class T>
void add_into(Tensor4<T>& dst, const Tensor4<T>& src) {
  for (size_t i = 0; i < dst.data().size(); ++i) {
    dst.data()[i] += src.data()[i];
  }
}

template <class T>
void check_ring_shapes(const simcomm::ProcessGroup& ring_group,
                       const Tensor4<T>& q, const Tensor4<T>& k,
                       const Tensor4<T>& v,
                       std::span<const int64_t> positions) {
  if (k.seq() != q.seq() || v.seq() != q.seq()) {
    throw_invalid("ring attention requires equal-size shards on every rank");
  }
  (void)ring_group;
  if (static_cast<int64_t>(positions.size()) != q.seq()) {
    throw_invalid("positions must carry one original index per local token");
  }
}

}  // namespace

template <class T>
RingAttentionResult<T> ring_attention(simcomm::RankCtx& ctx,
                                      const simcomm::ProcessGroup& ring_group,
                                      const Tensor4<T>& q, const Tensor4<T>& k,
                                      const Tensor4<T>& v,
                                      std::span<const int64_t> positions,
                                      bool causal) {
  check_ring_shapes(ring_group, q, k, v, positions);
  const int ring = ring_group.size();
  const int my = ring_group.local_index(ctx.rank());
  const size_t block_tokens = static_cast<size_t>(k.seq());

  const auto key_positions = ctx.all_gather<int64_t>(ring_group, positions);

  numerics::SoftmaxState<T> state(q.batch(), q.seq(), q.heads(),
                                  q.head_size());
  Tensor4<T> k_cur = k;
  Tensor4<T> v_cur = v;
  for (int step = 0; step < ring; ++step) {
    const int src = (my - step + ring) % ring;
    const auto k_pos = std::span<const int64_t>(key_positions)
                           .subspan(static_cast<size_t>(src) * block_tokens,
                                    block_tokens);
    const auto mask =
        causal ? BlockMask::causal(positions, k_pos) : BlockMask::none();
    state.update(q, k_cur, v_cur, mask);
    if (step + 1 < ring) {
      k_cur = shift_once(ctx, ring_group, k_cur);
      v_cur = shift_once(ctx, ring_group, v_cur);
    }
  }
  return {state.finalize(), state.logsumexp()};
}

template <class T>
RingGrads<T> ring_attention_backward(
    simcomm::RankCtx& ctx, const simcomm::ProcessGroup& ring_group,
    const Tensor4<T>& q, const Tensor4<T>& k, const Tensor4<T>& v,
    const Tensor4<T>& out, const Tensor4<T>& dout, std::span<const T> logsumexp,
    std::span<const int64_t> positions, bool causal) {
  check_ring_shapes(ring_group, q, k, v, positions);
  if (logsumexp.size() !=
      static_cast<size_t>(q.batch() * q.seq() * q.heads())) {
    throw_invalid("logsumexp does not match the forward shard (missing "
                  "forward artifacts?)");
  }
  const int ring = ring_group.size();
  const int my = ring_group.local_index(ctx.rank());
  const size_t block_tokens = static_cast<size_t>(k.seq());

  const auto key_positions = ctx.all_gather<int64_t>(ring_group, positions);
  const auto delta = numerics::output_dot_rows(out, dout);

  RingGrads<T> grads{Tensor4<T>(q.batch(), q.seq(), q.heads(), q.head_size()),
                     Tensor4<T>(k.batch(), k.seq(), k.heads(), k.head_size()),
                     Tensor4<T>(v.batch(), v.seq(), v.heads(), v.head_size())};

  Tensor4<T> k_cur = k;
  Tensor4<T> v_cur = v;
  Tensor4<T> own_dk, own_dv;   // this rank's contribution to its own block
  Tensor4<T> acc_dk, acc_dv;   // circulating partials for the current block

  for (int step = 0; step < ring; ++step) {
    const int src = (my - step + ring) % ring;
    const auto k_pos = std::span<const int64_t>(key_positions)
                           .subspan(static_cast<size_t>(src) * block_tokens,
                                    block_tokens);
    const auto mask =
        causal ? BlockMask::causal(positions, k_pos) : BlockMask::none();

    Tensor4<T> dk_blk(k.batch(), k.seq(), k.heads(), k.head_size());
    Tensor4<T> dv_blk(v.batch(), v.seq(), v.heads(), v.head_size());
    numerics::attention_block_backward(q, k_cur, v_cur, dout,
                                       std::span<const T>(delta), logsumexp,
                                       mask, grads.dq, dk_blk, dv_blk);

    if (step == 0) {
      // The owner's own contribution does not travel; it is added after the
      // circulating partial comes home, keeping every circulated tensor at
      // exactly R-1 hops.
      own_dk = std::move(dk_blk);
      own_dv = std::move(dv_blk);
    } else if (step == 1) {
      acc_dk = std::move(dk_blk);
      acc_dv = std::move(dv_blk);
    } else {
      add_into(dk_blk, acc_dk);
      add_into(dv_blk, acc_dv);
      std::swap(acc_dk, dk_blk);
      std::swap(acc_dv, dv_blk);
    }

    if (step + 1 < ring) {
      k_cur = shift_once(ctx, ring_group, k_cur);
      v_cur = shift_once(ctx, ring_group, v_cur);
    }
    if (step >= 1) {
      acc_dk = shift_once(ctx, ring_group, acc_dk);
      acc_dv = shift_once(ctx, ring_group, acc_dv);
    }
  }

  // After the last shift the circulating partial is the sum of every other
  // rank's contribution to this rank's own block.
  if (ring > 1) {
    add_into(grads.dk, acc_dk);
    add_into(grads.dv, acc_dv);
  }
  add_into(grads.dk, own_dk);
  add_into(grads.dv, own_dv);
  return grads;
}

template RingAttentionResult<float> ring_attention(simcomm::RankCtx&, const simcomm::ProcessGroup&, const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, std::span<const int64_t>, bool);
template RingAttentionResult<double> ring_attention(simcomm::RankCtx&, const simcomm::ProcessGroup&, const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, std::span<const int64_t>, bool);
template RingGrads<float> ring_attention_backward(simcomm::RankCtx&, const simcomm::ProcessGroup&, const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, std::span<const float>, std::span<const int64_t>, bool);
template RingGrads<double> ring_attention_backward(simcomm::RankCtx&, const simcomm::ProcessGroup&, const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, std::span<const double>, std::span<const int64_t>, bool);

}  // namespace uspsim::usp
