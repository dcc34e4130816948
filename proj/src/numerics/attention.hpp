// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "numerics/tensor.hpp"

namespace uspsim::numerics {

// Visibility of one key block for one query block. Causal masking is
// position-based: each token carries its original sequence index, so a
// reordered (e.g. zigzag) layout masks correctly without any block-structure
// special cases.
class BlockMask {
 public:
  static BlockMask none() { return BlockMask{}; }

  static BlockMask causal(std::span<const int64_t> query_positions,
                          std::span<const int64_t> key_positions) {
    BlockMask m;
    m.causal_ = true;
    m.q_pos_.assign(query_positions.begin(), query_positions.end());
    m.k_pos_.assign(key_positions.begin(), key_positions.end());
    return m;
  }

  bool masked(int64_t q_row, int64_t k_col) const {
    return causal_ && k_pos_[k_col] > q_pos_[q_row];
  }

  bool is_causal() const { return causal_; }

 private:
  bool causal_ = false;
  std::vector<int64_t> q_pos_;
  std::vector<int64_t> k_pos_;
};

// Scaled dot-product attention with optional grouped-query heads: Q carries
// hc heads, K/V carry kv_hc heads with hc % kv_hc == 0, and query head h reads
// kv head h*kv_hc/hc. Scaling divisor is sqrt(head_size). Keys are summed in
// ascending index order so results are reproducible bit-for-bit.
//
// `positions`, when given, holds the original sequence index of each stored
// token and drives the causal mask; when absent, storage order is used.
template <class T>
Tensor4<T> reference_attention(const Tensor4<T>& q, const Tensor4<T>& k,
                               const Tensor4<T>& v, bool causal,
                               std::span<const int64_t> positions = {});

// Analytic gradients of reference_attention. For grouped-query heads, dK/dV
// sum the contributions of every query head sharing the kv head, in ascending
// query-head order.
template <class T>
struct AttentionGrads {
  Tensor4<T> dq, dk, dv;
};

template <class T>
AttentionGrads<T> reference_attention_grad(const Tensor4<T>& q,
                                           const Tensor4<T>& k,
                                           const Tensor4<T>& v,
                                           const Tensor4<T>& dout, bool causal,
                                           std::span<const int64_t> positions = {});

// Online-softmax accumulator for block-at-a-time attention. Holds the running
// row max m, normalizer l and the unnormalized output; key blocks may arrive
// in any order and any partitioning.
template <class T>
class SoftmaxState {
 public:
  SoftmaxState(int64_t batch, int64_t q_len, int64_t heads, int64_t head_size);

  // Folds one key/value block into the state:
  //   m' = max(m, rowmax(S)), l' = l*exp(m-m') + rowsum(exp(S-m')),
  //   acc' = acc*exp(m-m') + exp(S-m') V,   S = Q Kᵀ / sqrt(hs) under mask.
  // A row whose block entries are all masked is left untouched, so a fully
  // masked block is a no-op rather than a -inf poison.
  void update(const Tensor4<T>& q_blk, const Tensor4<T>& k_blk,
              const Tensor4<T>& v_blk, const BlockMask& mask);

  // O = acc / l. Throws if some row never saw an unmasked key.
  Tensor4<T> finalize() const;

  // Per-row logsumexp m + log(l), laid out as (b*q_len + t)*heads + h.
  // The distributed backward recomputes block probabilities from it.
  std::vector<T> logsumexp() const;

  int64_t batch() const { return acc_.batch(); }
  int64_t q_len() const { return acc_.seq(); }
  int64_t heads() const { return acc_.heads(); }
  int64_t head_size() const { return acc_.head_size(); }

  bool operator==(const SoftmaxState& o) const {
    return m_ == o.m_ && l_ == o.l_ && acc_ == o.acc_;
  }

 private:
  size_t row_index(int64_t b, int64_t t, int64_t h) const {
    return static_cast<size_t>((b * acc_.seq() + t) * acc_.heads() + h);
  }

  std::vector<T> m_;  // running row max, -inf until a key is seen
  std::vector<T> l_;  // running normalizer
  Tensor4<T> acc_;    // unnormalized output
};

// One ring-step backward kernel. Recomputes block probabilities from the
// forward logsumexp (p = exp(s - lse), zero where masked), then accumulates
//   dV_blk += Pᵀ dO,  dS = P*(dP - delta),  dQ += dS K / sqrt(hs),
//   dK_blk += dSᵀ Q / sqrt(hs),
// where delta = rowsum(dO*O) with the same (b*q_len + t)*heads + h layout as
// the logsumexp. dq accumulates across calls; dk_blk/dv_blk are per-block.
template <class T>
void attention_block_backward(const Tensor4<T>& q, const Tensor4<T>& k_blk,
                              const Tensor4<T>& v_blk, const Tensor4<T>& dout,
                              std::span<const T> delta, std::span<const T> lse,
                              const BlockMask& mask, Tensor4<T>& dq,
                              Tensor4<T>& dk_blk, Tensor4<T>& dv_blk);

// delta = rowsum(dout * out) per (batch, token, head).
template <class T>
std::vector<T> output_dot_rows(const Tensor4<T>& out, const Tensor4<T>& dout);

extern template Tensor4<float> reference_attention(const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, bool, std::span<const int64_t>);
extern template Tensor4<double> reference_attention(const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, bool, std::span<const int64_t>);
extern template AttentionGrads<float> reference_attention_grad(const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, bool, std::span<const int64_t>);
extern template AttentionGrads<double> reference_attention_grad(const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, bool, std::span<const int64_t>);
extern template class SoftmaxState<float>;
extern template class SoftmaxState<double>;
extern template void attention_block_backward(const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, std::span<const float>, std::span<const float>, const BlockMask&, Tensor4<float>&, Tensor4<float>&, Tensor4<float>&);
extern template void attention_block_backward(const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, std::span<const double>, std::span<const double>, const BlockMask&, Tensor4<double>&, Tensor4<double>&, Tensor4<double>&);
extern template std::vector<float> output_dot_rows(const Tensor4<float>&, const Tensor4<float>&);
extern template std::vector<double> output_dot_rows(const Tensor4<double>&, const Tensor4<double>&);

}  // namespace uspsim::numerics
