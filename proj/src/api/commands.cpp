// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "api/run_report.hpp"
#include "common/error.hpp"
#include "common/random.hpp"
#include "costmodel/costmodel.hpp"
#include "numerics/attention.hpp"
#include "planner/planner.hpp"
#include "simcomm/mesh.hpp"
#include "simcomm/world.hpp"
#include "usp/partition.hpp"
#include "usp/usp_attention.hpp"

namespace uspsim::api {

namespace {

using nlohmann::json;

json envelope(const std::string& command, const json& params) {
  const json key = {{"command", command}, {"params", params}};
  return {{"schema_version", kSchemaVersion},
          {"command", command},
          {"params", params},
          {"config_digest", fnv1a_hex(key.dump())}};
}

RunReport invalid_report(const std::string& command, const json& params,
                         const std::string& message) {
  RunReport r;
  r.exit_code = 2;
  r.status = "invalid_input";
  r.json = envelope(command, params);
  r.json["status"] = r.status;
  r.json["exit_code"] = r.exit_code;
  r.json["results"] = {{"error", message}};
  r.text = "error: " + message + "\n";
  return r;
}

std::string format_sci(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// --------------------------------------------------------------------------
// simulate

struct SimSpec {
  int64_t batch = 1, seq_len = 64, heads = 8, kv_heads = 8, head_size = 16;
  int ulysses = 1, ring = 1;
  bool causal = false;
  bool fp32 = false;
  uint64_t seed = 0;
};

struct SimOutcome {
  simcomm::CommLedger ledger;
  double out_abs = 0, out_rel = 0;
  double dq_abs = 0, dk_abs = 0, dv_abs = 0;
};

template <class A, class B>
std::pair<double, double> max_errors(const numerics::Tensor4<A>& got,
                                     const numerics::Tensor4<B>& want) {
  double abs = 0, rel = 0;
  for (size_t i = 0; i < got.data().size(); ++i) {
    const double a = static_cast<double>(got.data()[i]);
    const double b = static_cast<double>(want.data()[i]);
    const double d = std::abs(a - b);
    abs = std::max(abs, d);
    rel = std::max(rel, d / std::max(std::abs(b), 1e-12));
  }
  return {abs, rel};
}

template <class T>
SimOutcome run_simulation(const SimSpec& spec, bool check) {
  const simcomm::ProcessMesh mesh(spec.ulysses, spec.ring);
  const usp::ShardSpec shard(mesh, spec.seq_len, /*zigzag=*/spec.causal);

  // Documented generator: one mt19937_64 stream seeded with `seed`, top-53-bit
  // uniform doubles in [-1, 1), filling Q, K, V, dO in that order.
  UniformSource src(spec.seed);
  numerics::Tensor4<T> q(spec.batch, spec.seq_len, spec.heads, spec.head_size);
  numerics::Tensor4<T> k(spec.batch, spec.seq_len, spec.kv_heads,
                         spec.head_size);
  numerics::Tensor4<T> v(spec.batch, spec.seq_len, spec.kv_heads,
                         spec.head_size);
  numerics::Tensor4<T> dout(spec.batch, spec.seq_len, spec.heads,
                            spec.head_size);
  for (auto* t : {&q, &k, &v, &dout}) {
    for (auto& x : t->data()) x = static_cast<T>(src.next(-1.0, 1.0));
  }

  struct PerRank {
    numerics::Tensor4<T> out, dq, dk, dv;
    std::vector<int64_t> positions;
  };
  auto world = simcomm::World::run<PerRank>(
      mesh.world_size(), [&](simcomm::RankCtx& ctx) {
        const auto positions = shard.positions_for(ctx.rank());
        const auto q_s = usp::extract_rows(q, positions);
        const auto k_s = usp::extract_rows(k, positions);
        const auto v_s = usp::extract_rows(v, positions);
        const auto do_s = usp::extract_rows(dout, positions);
        auto fwd = usp::usp_attention(ctx, mesh, q_s, k_s, v_s, positions,
                                      spec.causal);
        auto grads =
            usp::usp_attention_backward(ctx, mesh, fwd, do_s, spec.causal);
        return PerRank{std::move(fwd.out), std::move(grads.dq),
                       std::move(grads.dk), std::move(grads.dv), positions};
      });

  SimOutcome outcome;
  outcome.ledger = std::move(world.ledger);
  if (!check) return outcome;

  numerics::Tensor4<T> out(spec.batch, spec.seq_len, spec.heads,
                           spec.head_size);
  numerics::Tensor4<T> dq(spec.batch, spec.seq_len, spec.heads,
                          spec.head_size);
  numerics::Tensor4<T> dk(spec.batch, spec.seq_len, spec.kv_heads,
                          spec.head_size);
  numerics::Tensor4<T> dv(spec.batch, spec.seq_len, spec.kv_heads,
                          spec.head_size);
  for (const auto& pr : world.per_rank) {
    usp::place_rows(out, pr.out, pr.positions);
    usp::place_rows(dq, pr.dq, pr.positions);
    usp::place_rows(dk, pr.dk, pr.positions);
    usp::place_rows(dv, pr.dv, pr.positions);
  }

  // Single-device oracle in fp64 on bit-identical inputs.
  auto widen = [](const numerics::Tensor4<T>& t) {
    numerics::Tensor4<double> w(t.batch(), t.seq(), t.heads(), t.head_size());
    for (size_t i = 0; i < t.data().size(); ++i) {
      w.data()[i] = static_cast<double>(t.data()[i]);
    }
    return w;
  };
  const auto qd = widen(q), kd = widen(k), vd = widen(v), dod = widen(dout);
  const auto ref = numerics::reference_attention(qd, kd, vd, spec.causal);
  const auto refg =
      numerics::reference_attention_grad(qd, kd, vd, dod, spec.causal);

  std::tie(outcome.out_abs, outcome.out_rel) = max_errors(out, ref);
  outcome.dq_abs = max_errors(dq, refg.dq).first;
  outcome.dk_abs = max_errors(dk, refg.dk).first;
  outcome.dv_abs = max_errors(dv, refg.dv).first;
  return outcome;
}

json ledger_summary(const simcomm::CommLedger& ledger) {
  using simcomm::CollectiveKind;
  json kinds = json::object();
  for (auto kind : {CollectiveKind::kAllReduce, CollectiveKind::kAllGather,
                    CollectiveKind::kReduceScatter, CollectiveKind::kAllToAll,
                    CollectiveKind::kRingShift}) {
    const auto events = ledger.event_count(kind);
    if (events == 0) continue;
    kinds[simcomm::collective_name(kind)] = {
        {"events", events}, {"bytes_sent", ledger.total_bytes(kind)}};
  }

  std::map<std::string, int64_t> a2a_per_group, shifts_per_group;
  for (const auto& e : ledger.entries()) {
    if (e.kind == CollectiveKind::kAllToAll) a2a_per_group[e.group]++;
    if (e.kind == CollectiveKind::kRingShift) shifts_per_group[e.group]++;
  }
  json per_group = json::object();
  if (!a2a_per_group.empty()) {
    per_group["all_to_all"] = a2a_per_group.begin()->second;
  }
  if (!shifts_per_group.empty()) {
    per_group["ring_shift"] = shifts_per_group.begin()->second;
  }
  return {{"collectives", kinds}, {"events_per_group", per_group}};
}

RunReport cmd_simulate(const json& params) {
  SimSpec spec;
  spec.batch = params.value("batch", int64_t(1));
  spec.seq_len = params.value("seqlen", int64_t(64));
  spec.heads = params.value("heads", int64_t(8));
  spec.kv_heads = params.value("kv_heads", spec.heads);
  spec.head_size = params.value("head_size", int64_t(16));
  spec.ulysses = params.value("ulysses", 1);
  spec.ring = params.value("ring", 1);
  spec.causal = params.value("causal", false);
  spec.seed = params.value("seed", uint64_t(0));
  const std::string precision = params.value("precision", std::string("fp64"));
  if (precision == "fp32") {
    spec.fp32 = true;
  } else if (precision != "fp64") {
    throw_invalid("precision must be \"fp32\" or \"fp64\"");
  }
  const bool check = params.value("check", false);
  const double tolerance =
      params.value("tolerance", spec.fp32 ? 1e-3 : 1e-10);
  if (spec.batch < 1 || spec.seq_len < 1 || spec.heads < 1 ||
      spec.kv_heads < 1 || spec.head_size < 1) {
    throw_invalid("simulate dimensions must all be >= 1");
  }
  if (spec.heads % spec.kv_heads != 0) {
    throw_invalid("heads must be divisible by kv_heads");
  }

  const auto outcome = spec.fp32 ? run_simulation<float>(spec, check)
                                 : run_simulation<double>(spec, check);

  RunReport r;
  r.json = envelope("simulate", params);
  json results = {{"world_size", spec.ulysses * spec.ring},
                  {"mesh", {{"ulysses", spec.ulysses}, {"ring", spec.ring}}},
                  {"shape",
                   {{"batch", spec.batch},
                    {"seqlen", spec.seq_len},
                    {"heads", spec.heads},
                    {"kv_heads", spec.kv_heads},
                    {"head_size", spec.head_size}}},
                  {"causal", spec.causal},
                  {"precision", spec.fp32 ? "fp32" : "fp64"},
                  {"seed", spec.seed},
                  {"ledger", ledger_summary(outcome.ledger)}};

  std::ostringstream text;
  text << "simulate: mesh ulysses=" << spec.ulysses << " ring=" << spec.ring
       << " (world " << spec.ulysses * spec.ring << "), bs=" << spec.batch
       << " L=" << spec.seq_len << " hc=" << spec.heads << " kv="
       << spec.kv_heads << " hs=" << spec.head_size
       << (spec.causal ? ", causal" : ", full") << ", "
       << (spec.fp32 ? "fp32" : "fp64") << ", seed " << spec.seed << "\n";

  bool passed = true;
  if (check) {
    const double worst = std::max(
        {outcome.out_abs, outcome.dq_abs, outcome.dk_abs, outcome.dv_abs});
    passed = worst <= tolerance;
    results["check"] = {{"max_abs_out", outcome.out_abs},
                        {"max_rel_out", outcome.out_rel},
                        {"max_abs_dq", outcome.dq_abs},
                        {"max_abs_dk", outcome.dk_abs},
                        {"max_abs_dv", outcome.dv_abs},
                        {"tolerance", tolerance},
                        {"passed", passed}};
    text << "oracle check: |out-ref| " << format_sci(outcome.out_abs)
         << " (rel " << format_sci(outcome.out_rel) << "), |dq| "
         << format_sci(outcome.dq_abs) << ", |dk| "
         << format_sci(outcome.dk_abs) << ", |dv| "
         << format_sci(outcome.dv_abs) << " vs tolerance "
         << format_sci(tolerance) << ": " << (passed ? "PASS" : "FAIL")
         << "\n";
  }

  const auto& ledger_json = results["ledger"];
  text << "ledger:";
  for (auto it = ledger_json["collectives"].begin();
       it != ledger_json["collectives"].end(); ++it) {
    text << " " << it.key() << "=" << (*it)["events"].get<int64_t>()
         << " events/" << format_sci((*it)["bytes_sent"].get<double>())
         << " bytes";
  }
  text << "\n";

  r.exit_code = passed ? 0 : 1;
  r.status = passed ? "ok" : "tolerance_exceeded";
  r.json["status"] = r.status;
  r.json["exit_code"] = r.exit_code;
  r.json["results"] = std::move(results);
  r.text = text.str();
  r.ledger_csv = outcome.ledger.to_csv();
  return r;
}

// --------------------------------------------------------------------------
// cost

RunReport cmd_cost(const json& params) {
  const auto model = costmodel::model_from_json(params.at("model"));
  const auto cluster = costmodel::cluster_from_json(params.at("cluster"));
  const bool table = params.value("table", false);

  RunReport r;
  r.json = envelope("cost", params);
  json results;
  std::ostringstream text;

  if (params.contains("strategy")) {
    const auto strategy = costmodel::strategy_from_json(params.at("strategy"));
    const auto report = costmodel::full_report(strategy, model, cluster);
    results["strategy"] = costmodel::to_json(strategy);
    results["report"] = costmodel::to_json(report);
    text << "strategy " << strategy.to_string() << "\n"
         << "  param comm " << format_sci(report.param_comm_bytes)
         << " B/block (" << report.param_comm_op << ")\n"
         << "  act comm   " << format_sci(report.act_comm_bytes)
         << " B/block (" << report.act_comm_op << ")\n"
         << "  ring p2p   " << format_sci(report.ring_p2p_bytes)
         << " B/rank/block"
         << (report.overlap_note.empty() ? "" : " (" + report.overlap_note + ")")
         << "\n"
         << "  memory/device: P " << format_sci(report.memory.p_bytes)
         << " + G " << format_sci(report.memory.g_bytes) << " + OS "
         << format_sci(report.memory.os_bytes) << " + act "
         << format_sci(report.memory.act_bytes) << " = "
         << format_sci(report.memory.total()) << " B\n"
         << "  est step time " << format_sci(report.est_step_time_s) << " s\n";
  }
  if (table || !params.contains("strategy")) {
    const auto rendered = costmodel::render_cost_table(model, cluster);
    results["table_text"] = rendered;
    text << rendered;
  }

  r.exit_code = 0;
  r.status = "ok";
  r.json["status"] = r.status;
  r.json["exit_code"] = r.exit_code;
  r.json["results"] = std::move(results);
  r.text = text.str();
  return r;
}

// --------------------------------------------------------------------------
// plan

RunReport cmd_plan(const json& params) {
  const auto model = costmodel::model_from_json(params.at("model"));
  const auto cluster = costmodel::cluster_from_json(params.at("cluster"));
  planner::PlannerOptions options;
  if (params.contains("pins")) {
    const auto& pins = params.at("pins");
    if (pins.contains("tp")) options.tp = pins.at("tp").get<int>();
    if (pins.contains("ulysses")) options.ulysses = pins.at("ulysses").get<int>();
    if (pins.contains("ring")) options.ring = pins.at("ring").get<int>();
    if (pins.contains("dp")) options.dp = pins.at("dp").get<int>();
    if (pins.contains("pp")) options.pp = pins.at("pp").get<int>();
    if (pins.contains("zero_stage")) {
      options.zero_stage = pins.at("zero_stage").get<int>();
    }
  }
  options.include_rejected = params.value("include_rejected", true);
  const int top = params.value("top", 0);

  auto candidates = planner::enumerate_strategies(model, cluster, options);

  int64_t feasible = 0;
  std::map<std::string, int64_t> rejections;
  for (const auto& c : candidates) {
    if (c.verdict.ok) {
      feasible++;
    } else {
      rejections[c.verdict.rule]++;
    }
  }

  RunReport r;
  r.json = envelope("plan", params);
  json results;
  results["total_candidates"] = candidates.size();
  results["feasible"] = feasible;
  results["rejections"] = rejections;

  std::ostringstream text;
  text << "plan: " << feasible << " feasible of " << candidates.size()
       << " candidates\n";
  json out_candidates = json::array();
  int64_t shown = 0;
  for (const auto& c : candidates) {
    if (top > 0 && shown >= top) break;
    if (!c.verdict.ok && !options.include_rejected) continue;
    out_candidates.push_back(planner::to_json(c));
    ++shown;
    if (c.verdict.ok) {
      text << "  " << shown << ". " << c.strategy.to_string() << "  est "
           << format_sci(c.report.est_step_time_s) << " s  mem/device "
           << format_sci(c.report.memory.total()) << " B  [" << c.rank_order
           << "]\n";
    } else {
      text << "  " << shown << ". " << c.strategy.to_string() << "  rejected ("
           << c.verdict.rule << "): " << c.verdict.detail << "\n";
    }
  }
  if (!rejections.empty()) {
    text << "rejections:";
    for (const auto& [rule, count] : rejections) {
      text << " " << rule << "=" << count;
    }
    text << "\n";
  }
  results["candidates"] = std::move(out_candidates);

  r.exit_code = 0;
  r.status = "ok";
  r.json["status"] = r.status;
  r.json["exit_code"] = r.exit_code;
  r.json["results"] = std::move(results);
  r.text = text.str();
  return r;
}

// --------------------------------------------------------------------------
// balance

RunReport cmd_balance(const json& params) {
  const int64_t seq_len = params.value("seqlen", int64_t(16));
  const int ring = params.value("ring", 4);

  const auto zigzag = usp::zigzag_partition(seq_len, ring);
  const auto even = usp::even_partition(seq_len, ring);
  const auto zigzag_counts = usp::causal_pair_counts(zigzag, seq_len);
  const auto even_counts = usp::causal_pair_counts(even, seq_len);

  RunReport r;
  r.json = envelope("balance", params);
  json results = {{"seqlen", seq_len},
                  {"ring", ring},
                  {"zigzag_counts", zigzag_counts},
                  {"even_counts", even_counts},
                  {"even_skew", double(even_counts.back()) /
                                    double(even_counts.front())}};
  if (seq_len <= 64) results["zigzag_assignment"] = zigzag;

  std::ostringstream text;
  text << "balance: L=" << seq_len << " ring=" << ring << "\n";
  if (seq_len <= 64) {
    for (size_t p = 0; p < zigzag.size(); ++p) {
      text << "  ring rank " << p << " tokens [";
      for (size_t i = 0; i < zigzag[p].size(); ++i) {
        text << (i ? "," : "") << zigzag[p][i];
      }
      text << "]\n";
    }
  }
  auto print_counts = [&](const char* name,
                          const std::vector<int64_t>& counts) {
    text << "  " << name << " causal pair counts:";
    for (int64_t c : counts) text << " " << c;
    text << "\n";
  };
  print_counts("zigzag", zigzag_counts);
  print_counts("even  ", even_counts);
  text << "  even skew last/first = "
       << double(even_counts.back()) / double(even_counts.front()) << "\n";

  r.exit_code = 0;
  r.status = "ok";
  r.json["status"] = r.status;
  r.json["exit_code"] = r.exit_code;
  r.json["results"] = std::move(results);
  r.text = text.str();
  return r;
}

}  // namespace

RunReport run_command(const nlohmann::json& request) {
  std::string command;
  json params = json::object();
  try {
    command = request.at("command").get<std::string>();
    if (request.contains("params")) params = request.at("params");
  } catch (const json::exception& e) {
    return invalid_report("", request,
                          std::string("bad request envelope: ") + e.what());
  }

  try {
    if (command == "simulate") return cmd_simulate(params);
    if (command == "cost") return cmd_cost(params);
    if (command == "plan") return cmd_plan(params);
    if (command == "balance") return cmd_balance(params);
    return invalid_report(command, params, "unknown command: " + command);
  } catch (const json::exception& e) {
    return invalid_report(command, params,
                          std::string("malformed params: ") + e.what());
  } catch (const Error& e) {
    return invalid_report(command, params, e.what());
  } catch (const std::exception& e) {
    return invalid_report(command, params,
                          std::string("internal error: ") + e.what());
  }
}

}  // namespace uspsim::api
