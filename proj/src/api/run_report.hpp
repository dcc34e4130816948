// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <json.hpp>

namespace uspsim::api {

inline constexpr int kSchemaVersion = 1;

// One command's outcome: a machine-readable JSON document, a human text
// rendering, and the communication ledger when the command ran a simulation.
// Exit codes: 0 success, 1 tolerance failure, 2 invalid input/config.
struct RunReport {
  int exit_code = 0;
  std::string status;  // "ok" | "tolerance_exceeded" | "invalid_input"
  nlohmann::json json;
  std::string text;
  std::string ledger_csv;
};

// Dispatches a request of the form {"command": ..., "params": {...}}.
// Domain errors come back as exit-2 reports rather than exceptions.
RunReport run_command(const nlohmann::json& request);

std::string fnv1a_hex(const std::string& data);

}  // namespace uspsim::api
