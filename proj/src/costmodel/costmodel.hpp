// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "simcomm/ledger.hpp"

namespace uspsim::costmodel {

// Transformer block shape for mixed-precision (fp16/bf16) training.
struct ModelConfig {
  int64_t seq_len = 0;   // L, tokens
  int64_t hidden = 0;    // d
  int64_t heads = 0;     // hc, query heads
  int64_t kv_heads = 0;  // kv_hc; G = heads/kv_heads
  int64_t batch = 1;     // bs, global
  int64_t layers = 1;
  int dtype_bytes = 2;

  // Per-block parameter count. The GPT preset is the 12*d^2 elements of the
  // four attention projections plus the two FFN linears; models with a
  // different FFN sizing can pass an explicit count instead.
  enum class ParamFormula { kGpt, kCustom };
  ParamFormula param_formula = ParamFormula::kGpt;
  int64_t custom_params_per_block = 0;

  // Peak activation bytes per block = act_multiplier * bs * L * d * dtype.
  double act_multiplier = 1.0;
  // Fraction of activations a plain-TP rank keeps resident (config input; the
  // sequence-optimized TP variant shards fully instead).
  double tp_act_alpha = 0.5;

  int64_t head_size() const { return hidden / heads; }
  int64_t gqa_group() const { return heads / kv_heads; }  // G
  int64_t params_per_block() const {
    return param_formula == ParamFormula::kGpt ? 12 * hidden * hidden
                                               : custom_params_per_block;
  }
  void validate() const;
};

struct ClusterConfig {
  int devices = 1;  // N
  int devices_per_node = 1;
  double intra_bw = 1.0;       // bytes/s within a node
  double inter_bw = 1.0;       // bytes/s across nodes
  double memory_bytes = 0.0;   // per device; 0 disables the memory check
  double latency_s = 0.0;      // flat per-collective constant
  double overlap_budget_s = 0.0;  // compute time creditable against ring P2P
  void validate() const;
};

struct Strategy {
  int tp = 1;
  int ulysses = 1;
  int ring = 1;
  int dp = 1;
  int pp = 1;
  int zero_stage = 0;  // 0 = none, 1/2/3 = optimizer/+grads/+params sharding
  bool tp_sp = true;   // sequence-optimized TP (allgather+reducescatter)

  int degree_product() const { return tp * ulysses * ring * dp * pp; }
  int sp_degree() const { return ulysses * ring; }
  // ZeRO and gradient collectives run over the combined dp x sp group.
  int zero_group() const { return dp * ulysses * ring; }
  std::string to_string() const;
  void validate() const;
};

struct MemoryCost {
  double p_bytes = 0;
  double g_bytes = 0;
  double os_bytes = 0;
  double act_bytes = 0;
  double total() const { return p_bytes + g_bytes + os_bytes + act_bytes; }
};

struct CostReport {
  // Per transformer block, fwd+bwd, whole-tensor volumes with the table's
  // literal constants (12/18 for parameters, 8 or 4+4/G for activations).
  double param_comm_bytes = 0;
  double act_comm_bytes = 0;
  std::string param_comm_op;
  std::string act_comm_op;

  // Ring P2P traffic per rank per block (fwd K,V plus bwd K,V,dK,dV, each
  // circulating R-1 hops); reported separately because it overlaps with
  // compute.
  double ring_p2p_bytes = 0;
  std::string overlap_note;

  MemoryCost memory;       // per device
  double est_step_time_s = 0;
};

// Effective per-rank volume multiplier of a collective algorithm. Follows the
// standard ring-algorithm accounting with all_to_all approximated as 1 (the
// measured ledger keeps the exact (n-1)/n self-exclusion instead).
double algobw_factor(simcomm::CollectiveKind kind, int group_size);

// Communication columns only.
CostReport comm_cost(const Strategy& s, const ModelConfig& m);

// Memory columns only.
MemoryCost memory_cost(const Strategy& s, const ModelConfig& m);

// Bandwidth-aware step-time estimate with Tip-style placement: process-group
// dimensions are laid out innermost-first as tp, ulysses, ring, dp, pp, and a
// group pays the slowest link it spans. Ring P2P time is credited with the
// overlap budget. Throws if the strategy needs more devices than the cluster
// has.
struct StepTimeBreakdown {
  double param_s = 0;
  double tp_act_s = 0;
  double ulysses_act_s = 0;
  double ring_p2p_s = 0;  // after overlap credit
  double total_s = 0;
  bool tp_spans_nodes = false;
  bool ulysses_spans_nodes = false;
  bool ring_spans_nodes = false;
  bool zero_spans_nodes = false;
};
StepTimeBreakdown estimate_step_time(const Strategy& s, const ModelConfig& m,
                                     const ClusterConfig& c);

// comm + memory + time in one report.
CostReport full_report(const Strategy& s, const ModelConfig& m,
                       const ClusterConfig& c);

// Aligned-text rendering of the canonical strategy rows (ulysses-only,
// ring-only, dp, zero variants, unified, tp, tp-sp) for one model/cluster.
std::string render_cost_table(const ModelConfig& m, const ClusterConfig& c);

// JSON interchange.
ModelConfig model_from_json(const nlohmann::json& j);
ClusterConfig cluster_from_json(const nlohmann::json& j);
Strategy strategy_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Strategy& s);
nlohmann::json to_json(const CostReport& r);

}  // namespace uspsim::costmodel
