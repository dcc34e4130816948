// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include "numerics/attention.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace uspsim::numerics {

namespace {

template <class T>
void check_attention_shapes(const Tensor4<T>& q, const Tensor4<T>& k,
                            const Tensor4<T>& v,
                            std::span<const int64_t> positions) {
  if (k.seq() != v.seq() || k.heads() != v.heads()) {
    throw_invalid("K and V must agree on sequence length and head count");
  }
  if (q.head_size() != k.head_size() || q.head_size() != v.head_size()) {
    throw_invalid("Q, K, V must share head_size");
  }
  if (q.batch() != k.batch() || q.batch() != v.batch()) {
    throw_invalid("Q, K, V must share batch size");
  }
  if (q.heads() % k.heads() != 0) {
    std::ostringstream os;
    os << "query head count " << q.heads()
       << " is not divisible by kv head count " << k.heads();
    throw_invalid(os.str());
  }
  if (!positions.empty() && static_cast<int64_t>(positions.size()) != q.seq()) {
    throw_invalid("positions must carry one original index per token");
  }
}

inline int64_t pos_of(std::span<const int64_t> positions, int64_t i) {
  return positions.empty() ? i : positions[i];
}

template <class T>
inline T dot(std::span<const T> a, std::span<const T> b) {
  T acc = 0;
  for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

template <class T>
Tensor4<T> reference_attention(const Tensor4<T>& q, const Tensor4<T>& k,
                               const Tensor4<T>& v, bool causal,
                               std::span<const int64_t> positions) {
  check_attention_shapes(q, k, v, positions);
  if (q.seq() != k.seq()) {
    throw_invalid("self-attention requires equal Q and K sequence lengths");
  }

  const int64_t heads_per_kv = q.heads() / k.heads();
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(q.head_size()));
  Tensor4<T> out(q.batch(), q.seq(), q.heads(), q.head_size());
  std::vector<T> scores(static_cast<size_t>(k.seq()));

  for (int64_t b = 0; b < q.batch(); ++b) {
    for (int64_t i = 0; i < q.seq(); ++i) {
      const int64_t qp = pos_of(positions, i);
      for (int64_t h = 0; h < q.heads(); ++h) {
        const int64_t kv_h = h / heads_per_kv;
        const auto q_row = q.row(b, i, h);

        T row_max = -std::numeric_limits<T>::infinity();
        for (int64_t j = 0; j < k.seq(); ++j) {
          if (causal && pos_of(positions, j) > qp) continue;
          scores[j] = dot(q_row, k.row(b, j, kv_h)) * inv_scale;
          row_max = std::max(row_max, scores[j]);
        }

        T norm = 0;
        auto out_row = out.row(b, i, h);
        for (int64_t j = 0; j < k.seq(); ++j) {
          if (causal && pos_of(positions, j) > qp) continue;
          const T w = std::exp(scores[j] - row_max);
          norm += w;
          const auto v_row = v.row(b, j, kv_h);
          for (int64_t s = 0; s < q.head_size(); ++s) out_row[s] += w * v_row[s];
        }
        for (int64_t s = 0; s < q.head_size(); ++s) out_row[s] /= norm;
      }
    }
  }
  return out;
}

template <class T>
AttentionGrads<T> reference_attention_grad(const Tensor4<T>& q,
                                           const Tensor4<T>& k,
                                           const Tensor4<T>& v,
                                           const Tensor4<T>& dout, bool causal,
                                           std::span<const int64_t> positions) {
  check_attention_shapes(q, k, v, positions);
  if (q.seq() != k.seq()) {
    throw_invalid("self-attention requires equal Q and K sequence lengths");
  }
  if (!dout.same_shape(q)) {
    throw_invalid("dO must match Q's shape");
  }

  const int64_t heads_per_kv = q.heads() / k.heads();
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(q.head_size()));
  AttentionGrads<T> g{Tensor4<T>(q.batch(), q.seq(), q.heads(), q.head_size()),
                      Tensor4<T>(k.batch(), k.seq(), k.heads(), k.head_size()),
                      Tensor4<T>(v.batch(), v.seq(), v.heads(), v.head_size())};
  std::vector<T> p(static_cast<size_t>(k.seq()));
  std::vector<T> dp(static_cast<size_t>(k.seq()));

  for (int64_t b = 0; b < q.batch(); ++b) {
    for (int64_t i = 0; i < q.seq(); ++i) {
      const int64_t qp = pos_of(positions, i);
      for (int64_t h = 0; h < q.heads(); ++h) {
        const int64_t kv_h = h / heads_per_kv;
        const auto q_row = q.row(b, i, h);
        const auto do_row = dout.row(b, i, h);

        // Recompute the softmax row.
        T row_max = -std::numeric_limits<T>::infinity();
        for (int64_t j = 0; j < k.seq(); ++j) {
          if (causal && pos_of(positions, j) > qp) continue;
          p[j] = dot(q_row, k.row(b, j, kv_h)) * inv_scale;
          row_max = std::max(row_max, p[j]);
        }
        T norm = 0;
        for (int64_t j = 0; j < k.seq(); ++j) {
          if (causal && pos_of(positions, j) > qp) {
            p[j] = 0;
            continue;
          }
          p[j] = std::exp(p[j] - row_max);
          norm += p[j];
        }

        T pdp = 0;  // dot(p, dP)
        for (int64_t j = 0; j < k.seq(); ++j) {
          if (p[j] == T(0)) {
            dp[j] = 0;
            continue;
          }
          p[j] /= norm;
          dp[j] = dot<T>(do_row, v.row(b, j, kv_h));
          pdp += p[j] * dp[j];
        }

        auto dq_row = g.dq.row(b, i, h);
        for (int64_t j = 0; j < k.seq(); ++j) {
          if (p[j] == T(0)) continue;
          const T ds = p[j] * (dp[j] - pdp) * inv_scale;
          const auto k_row = k.row(b, j, kv_h);
          auto dk_row = g.dk.row(b, j, kv_h);
          auto dv_row = g.dv.row(b, j, kv_h);
          for (int64_t s = 0; s < q.head_size(); ++s) {
            dq_row[s] += ds * k_row[s];
            dk_row[s] += ds * q_row[s];
            dv_row[s] += p[j] * do_row[s];
          }
        }
      }
    }
  }
  return g;
}

template <class T>
SoftmaxState<T>::SoftmaxState(int64_t batch, int64_t q_len, int64_t heads,
                              int64_t head_size)
    : acc_(batch, q_len, heads, head_size) {
  const size_t rows = static_cast<size_t>(batch * q_len * heads);
  m_.assign(rows, -std::numeric_limits<T>::infinity());
  l_.assign(rows, T(0));
}

template <class T>
void SoftmaxState<T>::update(const Tensor4<T>& q_blk, const Tensor4<T>& k_blk,
                             const Tensor4<T>& v_blk, const BlockMask& mask) {
  check_attention_shapes(q_blk, k_blk, v_blk, {});
  if (!q_blk.same_shape(acc_)) {
    throw_invalid("query block does not match accumulator shape");
  }

  const int64_t heads_per_kv = q_blk.heads() / k_blk.heads();
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(q_blk.head_size()));
  std::vector<T> scores(static_cast<size_t>(k_blk.seq()));

  for (int64_t b = 0; b < q_blk.batch(); ++b) {
    for (int64_t i = 0; i < q_blk.seq(); ++i) {
      for (int64_t h = 0; h < q_blk.heads(); ++h) {
        const int64_t kv_h = h / heads_per_kv;
        const auto q_row = q_blk.row(b, i, h);

        T row_max = -std::numeric_limits<T>::infinity();
        bool any = false;
        for (int64_t j = 0; j < k_blk.seq(); ++j) {
          if (mask.masked(i, j)) continue;
          scores[j] = dot(q_row, k_blk.row(b, j, kv_h)) * inv_scale;
          row_max = std::max(row_max, scores[j]);
          any = true;
        }
        if (!any) continue;  // fully masked row: leave the state untouched

        const size_t r = row_index(b, i, h);
        const T m_new = std::max(m_[r], row_max);
        const T rescale = std::exp(m_[r] - m_new);  // 0 while m is still -inf

        auto acc_row = acc_.row(b, i, h);
        for (int64_t s = 0; s < q_blk.head_size(); ++s) acc_row[s] *= rescale;
        T l_new = l_[r] * rescale;
        for (int64_t j = 0; j < k_blk.seq(); ++j) {
          if (mask.masked(i, j)) continue;
          const T w = std::exp(scores[j] - m_new);
          l_new += w;
          const auto v_row = v_blk.row(b, j, kv_h);
          for (int64_t s = 0; s < q_blk.head_size(); ++s) {
            acc_row[s] += w * v_row[s];
          }
        }
        m_[r] = m_new;
        l_[r] = l_new;
      }
    }
  }
}

template <class T>
Tensor4<T> SoftmaxState<T>::finalize() const {
  Tensor4<T> out(acc_.batch(), acc_.seq(), acc_.heads(), acc_.head_size());
  for (int64_t b = 0; b < acc_.batch(); ++b) {
    for (int64_t i = 0; i < acc_.seq(); ++i) {
      for (int64_t h = 0; h < acc_.heads(); ++h) {
        const size_t r = row_index(b, i, h);
        if (l_[r] == T(0)) {
          std::ostringstream os;
          os << "attention row saw no keys (batch " << b << ", token " << i
             << ", head " << h << ")";
          throw Error(ErrorCode::kNumeric, os.str());
        }
        const auto acc_row = acc_.row(b, i, h);
        auto out_row = out.row(b, i, h);
        for (int64_t s = 0; s < acc_.head_size(); ++s) {
          out_row[s] = acc_row[s] / l_[r];
        }
      }
    }
  }
  return out;
}

template <class T>
std::vector<T> SoftmaxState<T>::logsumexp() const {
  std::vector<T> lse(m_.size());
  for (size_t r = 0; r < m_.size(); ++r) {
    lse[r] = l_[r] > T(0) ? m_[r] + std::log(l_[r])
                          : -std::numeric_limits<T>::infinity();
  }
  return lse;
}

template <class T>
std::vector<T> output_dot_rows(const Tensor4<T>& out, const Tensor4<T>& dout) {
  if (!out.same_shape(dout)) throw_invalid("out/dout shape mismatch");
  std::vector<T> delta(
      static_cast<size_t>(out.batch() * out.seq() * out.heads()));
  size_t r = 0;
  for (int64_t b = 0; b < out.batch(); ++b) {
    for (int64_t i = 0; i < out.seq(); ++i) {
      for (int64_t h = 0; h < out.heads(); ++h) {
        delta[r++] = dot(out.row(b, i, h), dout.row(b, i, h));
      }
    }
  }
  return delta;
}

template <class T>
void attention_block_backward(const Tensor4<T>& q, const Tensor4<T>& k_blk,
                              const Tensor4<T>& v_blk, const Tensor4<T>& dout,
                              std::span<const T> delta, std::span<const T> lse,
                              const BlockMask& mask, Tensor4<T>& dq,
                              Tensor4<T>& dk_blk, Tensor4<T>& dv_blk) {
  check_attention_shapes(q, k_blk, v_blk, {});
  if (!dq.same_shape(q) || !dk_blk.same_shape(k_blk) ||
      !dv_blk.same_shape(v_blk) || !dout.same_shape(q)) {
    throw_invalid("gradient buffers do not match their primal shapes");
  }

  const int64_t heads_per_kv = q.heads() / k_blk.heads();
  const T inv_scale = T(1) / std::sqrt(static_cast<T>(q.head_size()));

  for (int64_t b = 0; b < q.batch(); ++b) {
    for (int64_t i = 0; i < q.seq(); ++i) {
      for (int64_t h = 0; h < q.heads(); ++h) {
        const int64_t kv_h = h / heads_per_kv;
        const size_t r = static_cast<size_t>((b * q.seq() + i) * q.heads() + h);
        const auto q_row = q.row(b, i, h);
        const auto do_row = dout.row(b, i, h);
        auto dq_row = dq.row(b, i, h);

        for (int64_t j = 0; j < k_blk.seq(); ++j) {
          if (mask.masked(i, j)) continue;
          const T s = dot(q_row, k_blk.row(b, j, kv_h)) * inv_scale;
          const T p = std::exp(s - lse[r]);
          const T dp = dot<T>(do_row, v_blk.row(b, j, kv_h));
          const T ds = p * (dp - delta[r]) * inv_scale;
          const auto k_row = k_blk.row(b, j, kv_h);
          auto dk_row = dk_blk.row(b, j, kv_h);
          auto dv_row = dv_blk.row(b, j, kv_h);
          for (int64_t x = 0; x < q.head_size(); ++x) {
            dq_row[x] += ds * k_row[x];
            dk_row[x] += ds * q_row[x];
            dv_row[x] += p * do_row[x];
          }
        }
      }
    }
  }
}

template Tensor4<float> reference_attention(const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, bool, std::span<const int64_t>);
template Tensor4<double> reference_attention(const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, bool, std::span<const int64_t>);
template AttentionGrads<float> reference_attention_grad(const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, bool, std::span<const int64_t>);
template AttentionGrads<double> reference_attention_grad(const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, bool, std::span<const int64_t>);
template class SoftmaxState<float>;
template class SoftmaxState<double>;
template void attention_block_backward(const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, const Tensor4<float>&, std::span<const float>, std::span<const float>, const BlockMask&, Tensor4<float>&, Tensor4<float>&, Tensor4<float>&);
template void attention_block_backward(const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, const Tensor4<double>&, std::span<const double>, std::span<const double>, const BlockMask&, Tensor4<double>&, Tensor4<double>&, Tensor4<double>&);
template std::vector<float> output_dot_rows(const Tensor4<float>&, const Tensor4<float>&);
template std::vector<double> output_dot_rows(const Tensor4<double>&, const Tensor4<double>&);

}  // namespace uspsim::numerics
