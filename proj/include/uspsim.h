/* Copyright (c) 2026, the uspsim authors.
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the uspsim library: a deterministic simulator and planner
 * for unified (Ulysses + Ring) sequence-parallel attention, with byte-exact
 * communication accounting, an analytic communication/memory cost model and
 * a hybrid-parallelism planner.
 *
 * Every command is a JSON request document:
 *
 *   {"command": "simulate" | "cost" | "plan" | "balance",
 *    "params": { ... }}
 *
 * and produces an opaque report carrying a JSON document, a human-readable
 * text rendering and (for simulations) a CSV communication ledger. See the
 * project README for the parameter schemas.
 */

#ifndef USPSIM_H
#define USPSIM_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum uspsim_status {
  USPSIM_OK = 0,
  USPSIM_TOLERANCE_EXCEEDED = 1, /* simulation ran, oracle check failed */
  USPSIM_INVALID_INPUT = 2,
  USPSIM_INTERNAL_ERROR = 3,
} uspsim_status;

typedef struct uspsim_report uspsim_report;

/* Runs one command. Returns the report's exit status; *out_report is set
 * whenever a report could be produced (including tolerance failures and
 * most invalid-input cases, which carry a structured error document) and
 * must be released with uspsim_report_free. When *out_report is NULL,
 * uspsim_last_error() describes the failure. */
uspsim_status uspsim_run(const char* request_json, uspsim_report** out_report);

/* Views into the report; valid until uspsim_report_free. */
const char* uspsim_report_json(const uspsim_report* report);
const char* uspsim_report_text(const uspsim_report* report);
/* Empty string when the command produced no ledger. */
const char* uspsim_report_ledger_csv(const uspsim_report* report);
/* 0 success, 1 tolerance failure, 2 invalid input/config. */
int uspsim_report_exit_code(const uspsim_report* report);

void uspsim_report_free(uspsim_report* report);

/* Thread-local message for the last uspsim_run that returned no report. */
const char* uspsim_last_error(void);

const char* uspsim_version(void);

#ifdef __cplusplus
}
#endif

#endif /* USPSIM_H */
