// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include "uspsim.h"

#include <new>
#include <string>

#include "api/run_report.hpp"

struct uspsim_report {
  uspsim::api::RunReport impl;
  std::string json_dump;  // serialized once, lifetime tied to the handle
};

namespace {

thread_local std::string g_last_error;

uspsim_status status_from_exit(int exit_code) {
  switch (exit_code) {
    case 0: return USPSIM_OK;
    case 1: return USPSIM_TOLERANCE_EXCEEDED;
    case 2: return USPSIM_INVALID_INPUT;
    default: return USPSIM_INTERNAL_ERROR;
  }
}

}  // namespace

extern "C" {

uspsim_status uspsim_run(const char* request_json, uspsim_report** out_report) {
  if (out_report == nullptr) return USPSIM_INVALID_INPUT;
  *out_report = nullptr;
  if (request_json == nullptr) {
    g_last_error = "request_json is null";
    return USPSIM_INVALID_INPUT;
  }
  try {
    const auto request =
        nlohmann::json::parse(request_json, nullptr, /*allow_exceptions=*/true);
    auto report = uspsim::api::run_command(request);
    auto* handle = new uspsim_report{std::move(report), {}};
    handle->json_dump = handle->impl.json.dump();
    *out_report = handle;
    return status_from_exit(handle->impl.exit_code);
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("request is not valid JSON: ") + e.what();
    return USPSIM_INVALID_INPUT;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return USPSIM_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return USPSIM_INTERNAL_ERROR;
  }
}

const char* uspsim_report_json(const uspsim_report* report) {
  return report == nullptr ? "" : report->json_dump.c_str();
}

const char* uspsim_report_text(const uspsim_report* report) {
  return report == nullptr ? "" : report->impl.text.c_str();
}

const char* uspsim_report_ledger_csv(const uspsim_report* report) {
  return report == nullptr ? "" : report->impl.ledger_csv.c_str();
}

int uspsim_report_exit_code(const uspsim_report* report) {
  return report == nullptr ? 2 : report->impl.exit_code;
}

void uspsim_report_free(uspsim_report* report) { delete report; }

const char* uspsim_last_error(void) { return g_last_error.c_str(); }

const char* uspsim_version(void) { return "0.1.0"; }

}  // extern "C"
