// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "common/random.hpp"
#include "numerics/tensor.hpp"

namespace uspsim::testutil {

template <class T>
void fill_uniform(numerics::Tensor4<T>& t, UniformSource& src, double lo = -1.0,
                  double hi = 1.0) {
  for (auto& x : t.data()) x = static_cast<T>(src.next(lo, hi));
}

template <class T>
double max_abs_diff(const numerics::Tensor4<T>& a,
                    const numerics::Tensor4<T>& b) {
  double m = 0;
  for (size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) -
                             static_cast<double>(b.data()[i])));
  }
  return m;
}

inline bool rel_close(double a, double b, double rtol, double atol = 1e-12) {
  return std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

// Independent oracle: scaled-dot-product attention by direct long-double
// softmax enumeration (no max subtraction, no blockwise machinery). Grouped
// query heads map h -> h*kv_hc/hc.
inline numerics::Tensor4<double> brute_force_attention(
    const numerics::Tensor4<double>& q, const numerics::Tensor4<double>& k,
    const numerics::Tensor4<double>& v, bool causal,
    std::span<const int64_t> positions = {}) {
  const int64_t hs = q.head_size();
  const int64_t heads_per_kv = q.heads() / k.heads();
  numerics::Tensor4<double> out(q.batch(), q.seq(), q.heads(), hs);
  const long double scale = 1.0L / std::sqrt(static_cast<long double>(hs));
  auto pos = [&](int64_t i) { return positions.empty() ? i : positions[i]; };

  for (int64_t b = 0; b < q.batch(); ++b) {
    for (int64_t i = 0; i < q.seq(); ++i) {
      for (int64_t h = 0; h < q.heads(); ++h) {
        const int64_t kv_h = h / heads_per_kv;
        long double norm = 0;
        std::vector<long double> w(q.seq(), 0.0L);
        for (int64_t j = 0; j < k.seq(); ++j) {
          if (causal && pos(j) > pos(i)) continue;
          long double s = 0;
          for (int64_t x = 0; x < hs; ++x) {
            s += static_cast<long double>(q.at(b, i, h, x)) * k.at(b, j, kv_h, x);
          }
          w[j] = std::exp(s * scale);
          norm += w[j];
        }
        for (int64_t x = 0; x < hs; ++x) {
          long double acc = 0;
          for (int64_t j = 0; j < k.seq(); ++j) {
            acc += w[j] * static_cast<long double>(v.at(b, j, kv_h, x));
          }
          out.at(b, i, h, x) = static_cast<double>(acc / norm);
        }
      }
    }
  }
  return out;
}

}  // namespace uspsim::testutil
