// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include "api/run_report.hpp"

#include <cstdint>
#include <cstdio>

namespace uspsim::api {

std::string fnv1a_hex(const std::string& data) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : data) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace uspsim::api
