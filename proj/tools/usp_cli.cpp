// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end over the uspsim C API. Flags are assembled into the
// JSON request documents the library consumes; see the README for schemas.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "uspsim.h"

namespace {

using nlohmann::json;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "error: cannot open " << path << "\n";
    std::exit(2);
  }
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    std::cerr << "error: " << path << ": " << e.what() << "\n";
    std::exit(2);
  }
}

int emit(const json& request, bool as_json, const std::string& ledger_out) {
  uspsim_report* report = nullptr;
  const auto status = uspsim_run(request.dump().c_str(), &report);
  if (report == nullptr) {
    std::cerr << "error: " << uspsim_last_error() << "\n";
    return status == USPSIM_OK ? 2 : int(status);
  }
  if (as_json) {
    std::cout << uspsim_report_json(report) << "\n";
  } else {
    std::cout << uspsim_report_text(report);
  }
  if (!ledger_out.empty()) {
    const std::string csv = uspsim_report_ledger_csv(report);
    std::ofstream out(ledger_out);
    if (!out) {
      std::cerr << "error: cannot write " << ledger_out << "\n";
      uspsim_report_free(report);
      return 2;
    }
    out << csv;
  }
  const int code = uspsim_report_exit_code(report);
  uspsim_report_free(report);
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uspsim: unified sequence-parallel attention simulator, cost "
               "model and planner"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "emit the machine-readable report");

  // ---- simulate ----------------------------------------------------------
  auto* simulate = app.add_subcommand(
      "simulate", "run USP attention fwd+bwd on simulated ranks");
  int64_t batch = 1, seqlen = 64, heads = 8, head_size = 16;
  std::optional<int64_t> kv_heads;
  int ulysses = 1, ring = 1;
  bool causal = false, check = false;
  uint64_t seed = 0;
  std::string precision = "fp64";
  std::optional<double> tolerance;
  std::string ledger_out;
  simulate->add_option("--batch,-b", batch, "global batch size");
  simulate->add_option("--seqlen,-l", seqlen, "sequence length");
  simulate->add_option("--heads", heads, "query head count");
  simulate->add_option("--kv-heads", kv_heads,
                       "kv head count (defaults to --heads)");
  simulate->add_option("--head-size", head_size, "per-head dimension");
  simulate->add_option("--ulysses,-u", ulysses, "ulysses degree");
  simulate->add_option("--ring,-r", ring, "ring degree");
  simulate->add_flag("--causal", causal, "causal mask (zigzag layout)");
  simulate->add_option("--precision", precision, "fp32 or fp64");
  simulate->add_option("--seed", seed, "rng seed");
  simulate->add_flag("--check", check, "compare against the oracle");
  simulate->add_option("--tolerance", tolerance,
                       "max abs error accepted with --check");
  simulate->add_option("--ledger-out", ledger_out,
                       "write the communication ledger CSV here");

  // ---- cost --------------------------------------------------------------
  auto* cost = app.add_subcommand("cost", "communication/memory cost model");
  std::string model_path, cluster_path;
  bool table = false;
  std::optional<int> s_tp, s_u, s_r, s_dp, s_pp, s_zero;
  std::optional<bool> s_tp_sp;
  cost->add_option("--model", model_path, "model config JSON")->required();
  cost->add_option("--cluster", cluster_path, "cluster config JSON")
      ->required();
  cost->add_flag("--table", table, "render the canonical strategy rows");
  cost->add_option("--tp", s_tp, "tensor-parallel degree");
  cost->add_option("--ulysses", s_u, "ulysses degree");
  cost->add_option("--ring", s_r, "ring degree");
  cost->add_option("--dp", s_dp, "data-parallel degree");
  cost->add_option("--pp", s_pp, "pipeline degree");
  cost->add_option("--zero", s_zero, "zero stage 0..3");
  cost->add_option("--tp-sp", s_tp_sp, "sequence-optimized tp (default on)");

  // ---- plan --------------------------------------------------------------
  auto* plan = app.add_subcommand("plan", "enumerate and rank strategies");
  std::string p_model, p_cluster;
  int top = 10;
  bool feasible_only = false;
  std::optional<int> p_tp, p_u, p_r, p_dp, p_pp, p_zero;
  plan->add_option("--model", p_model, "model config JSON")->required();
  plan->add_option("--cluster", p_cluster, "cluster config JSON")->required();
  plan->add_option("--top", top, "show the top K candidates (0 = all)");
  plan->add_flag("--feasible-only", feasible_only,
                 "drop rejected candidates from the listing");
  plan->add_option("--tp", p_tp, "pin the tensor-parallel degree");
  plan->add_option("--ulysses", p_u, "pin the ulysses degree");
  plan->add_option("--ring", p_r, "pin the ring degree");
  plan->add_option("--dp", p_dp, "pin the data-parallel degree");
  plan->add_option("--pp", p_pp, "pin the pipeline degree");
  plan->add_option("--zero", p_zero, "pin the zero stage");

  // ---- balance -----------------------------------------------------------
  auto* balance = app.add_subcommand(
      "balance", "zigzag causal load-balance assignment and pair counts");
  int64_t b_seqlen = 16;
  int b_ring = 4;
  balance->add_option("--seqlen,-l", b_seqlen, "sequence length");
  balance->add_option("--ring,-r", b_ring, "ring degree");

  CLI11_PARSE(app, argc, argv);

  if (simulate->parsed()) {
    json params = {{"batch", batch},       {"seqlen", seqlen},
                   {"heads", heads},       {"head_size", head_size},
                   {"ulysses", ulysses},   {"ring", ring},
                   {"causal", causal},     {"precision", precision},
                   {"seed", seed},         {"check", check}};
    if (kv_heads) params["kv_heads"] = *kv_heads;
    if (tolerance) params["tolerance"] = *tolerance;
    return emit({{"command", "simulate"}, {"params", params}}, as_json,
                ledger_out);
  }

  if (cost->parsed()) {
    json params = {{"model", read_json_file(model_path)},
                   {"cluster", read_json_file(cluster_path)},
                   {"table", table}};
    const bool have_strategy =
        s_tp || s_u || s_r || s_dp || s_pp || s_zero || s_tp_sp;
    if (have_strategy) {
      json strategy = json::object();
      if (s_tp) strategy["tp"] = *s_tp;
      if (s_u) strategy["ulysses"] = *s_u;
      if (s_r) strategy["ring"] = *s_r;
      if (s_dp) strategy["dp"] = *s_dp;
      if (s_pp) strategy["pp"] = *s_pp;
      if (s_zero) strategy["zero_stage"] = *s_zero;
      if (s_tp_sp) strategy["tp_sp"] = *s_tp_sp;
      params["strategy"] = strategy;
    }
    return emit({{"command", "cost"}, {"params", params}}, as_json, "");
  }

  if (plan->parsed()) {
    json pins = json::object();
    if (p_tp) pins["tp"] = *p_tp;
    if (p_u) pins["ulysses"] = *p_u;
    if (p_r) pins["ring"] = *p_r;
    if (p_dp) pins["dp"] = *p_dp;
    if (p_pp) pins["pp"] = *p_pp;
    if (p_zero) pins["zero_stage"] = *p_zero;
    json params = {{"model", read_json_file(p_model)},
                   {"cluster", read_json_file(p_cluster)},
                   {"pins", pins},
                   {"top", top},
                   {"include_rejected", !feasible_only}};
    return emit({{"command", "plan"}, {"params", params}}, as_json, "");
  }

  json params = {{"seqlen", b_seqlen}, {"ring", b_ring}};
  return emit({{"command", "balance"}, {"params", params}}, as_json, "");
}
