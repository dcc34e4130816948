// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace uspsim {

enum class ErrorCode {
  kInvalidArgument,   // malformed input, bad shapes, bad config
  kConstraint,        // a parallelism rule was violated (head limits, divisibility)
  kCommMismatch,      // ranks disagreed on a collective (deadlock, ragged sizes)
  kNumeric,           // degenerate numeric state (e.g. a row saw no keys)
  kInternal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void throw_invalid(const std::string& what) {
  throw Error(ErrorCode::kInvalidArgument, what);
}

[[noreturn]] inline void throw_constraint(const std::string& what) {
  throw Error(ErrorCode::kConstraint, what);
}

}  // namespace uspsim
