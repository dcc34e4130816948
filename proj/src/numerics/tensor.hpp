// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "common/error.hpp"

namespace uspsim::numerics {

enum class Precision { kF32, kF64 };

inline int precision_bytes(Precision p) { return p == Precision::kF32 ? 4 : 8; }

// Dense 4-axis array with row-major layout (batch, sequence, heads, head_size).
template <class T>
class Tensor4 {
 public:
  Tensor4() = default;

  Tensor4(int64_t batch, int64_t seq, int64_t heads, int64_t head_size)
      : batch_(batch), seq_(seq), heads_(heads), head_size_(head_size) {
    if (batch < 1 || seq < 1 || heads < 1 || head_size < 1) {
      throw_invalid("Tensor4 extents must all be >= 1");
    }
    data_.assign(static_cast<size_t>(batch * seq * heads * head_size), T(0));
  }

  int64_t batch() const { return batch_; }
  int64_t seq() const { return seq_; }
  int64_t heads() const { return heads_; }
  int64_t head_size() const { return head_size_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  T& at(int64_t b, int64_t t, int64_t h, int64_t s) {
    return data_[index(b, t, h, s)];
  }
  const T& at(int64_t b, int64_t t, int64_t h, int64_t s) const {
    return data_[index(b, t, h, s)];
  }

  // Contiguous head_size-length row for one (batch, token, head).
  std::span<T> row(int64_t b, int64_t t, int64_t h) {
    return {data_.data() + index(b, t, h, 0), static_cast<size_t>(head_size_)};
  }
  std::span<const T> row(int64_t b, int64_t t, int64_t h) const {
    return {data_.data() + index(b, t, h, 0), static_cast<size_t>(head_size_)};
  }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  bool same_shape(const Tensor4& o) const {
    return batch_ == o.batch_ && seq_ == o.seq_ && heads_ == o.heads_ &&
           head_size_ == o.head_size_;
  }

  bool operator==(const Tensor4& o) const {
    return same_shape(o) && data_ == o.data_;
  }

 private:
  size_t index(int64_t b, int64_t t, int64_t h, int64_t s) const {
    return static_cast<size_t>(((b * seq_ + t) * heads_ + h) * head_size_ + s);
  }

  int64_t batch_ = 0;
  int64_t seq_ = 0;
  int64_t heads_ = 0;
  int64_t head_size_ = 0;
  std::vector<T> data_;
};

using Tensor4f = Tensor4<float>;
using Tensor4d = Tensor4<double>;

}  // namespace uspsim::numerics
