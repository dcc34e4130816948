// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace uspsim {

// Portable uniform doubles in [0, 1). std::uniform_real_distribution is
// implementation-defined, so failures would not reproduce across standard
// libraries; mapping the top 53 bits of a mt19937_64 draw is bit-stable
// everywhere.
class UniformSource {
 public:
  explicit UniformSource(uint64_t seed) : engine_(seed) {}

  double next_unit() {
    const uint64_t bits = engine_();
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
  }

  // Uniform in [lo, hi).
  double next(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace uspsim
