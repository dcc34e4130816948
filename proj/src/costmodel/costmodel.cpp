// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include "costmodel/costmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "common/error.hpp"

namespace uspsim::costmodel {

void ModelConfig::validate() const {
  if (seq_len < 1 || hidden < 1 || heads < 1 || kv_heads < 1 || batch < 1 ||
      layers < 1 || dtype_bytes < 1) {
    throw_invalid("model config fields must be positive");
  }
  if (hidden % heads != 0) {
    throw_invalid("hidden dimension must equal heads * head_size");
  }
  if (heads % kv_heads != 0) {
    throw_invalid("query head count must be divisible by kv head count");
  }
  if (param_formula == ParamFormula::kCustom && custom_params_per_block < 1) {
    throw_invalid("custom parameter formula needs a positive per-block count");
  }
  if (tp_act_alpha <= 0.0 || tp_act_alpha >= 1.0) {
    throw_invalid("tp activation fraction must lie in (0, 1)");
  }
}

void ClusterConfig::validate() const {
  if (devices < 1 || devices_per_node < 1) {
    throw_invalid("cluster device counts must be positive");
  }
  if (devices % devices_per_node != 0) {
    throw_invalid("device count must be a whole number of nodes");
  }
  if (intra_bw <= 0 || inter_bw <= 0) {
    throw_invalid("bandwidths must be positive");
  }
  if (memory_bytes < 0 || latency_s < 0 || overlap_budget_s < 0) {
    throw_invalid("memory, latency and overlap budget must be >= 0");
  }
}

void Strategy::validate() const {
  if (tp < 1 || ulysses < 1 || ring < 1 || dp < 1 || pp < 1) {
    throw_invalid("parallel degrees must be >= 1");
  }
  if (zero_stage < 0 || zero_stage > 3) {
    throw_invalid("zero stage must be 0..3");
  }
}

std::string Strategy::to_string() const {
  std::ostringstream os;
  os << "tp=" << tp << " ulysses=" << ulysses << " ring=" << ring
     << " dp=" << dp << " pp=" << pp << " zero=" << zero_stage;
  if (tp > 1) os << (tp_sp ? " tp-sp" : " tp-plain");
  return os.str();
}

double algobw_factor(simcomm::CollectiveKind kind, int group_size) {
  if (group_size < 1) throw_invalid("group size must be >= 1");
  const double n = group_size;
  switch (kind) {
    case simcomm::CollectiveKind::kAllReduce: return 2 * (n - 1) / n;
    case simcomm::CollectiveKind::kAllGather:
    case simcomm::CollectiveKind::kReduceScatter: return (n - 1) / n;
    case simcomm::CollectiveKind::kAllToAll: return 1.0;
    case simcomm::CollectiveKind::kRingShift: return 1.0;
  }
  throw_invalid("unknown collective");
}

namespace {

// Ring P2P bytes one rank sends per block, fwd+bwd. K and V circulate R-1
// hops in the forward; the backward recirculates them and ships the partial
// dK/dV the same way, so six block-sized buffers travel R-1 hops each.
double ring_p2p_rank_bytes(const Strategy& s, const ModelConfig& m) {
  if (s.ring <= 1) return 0;
  const double kv_heads_per_rank =
      double(m.kv_heads) / (double(s.tp) * s.ulysses);
  const double block_bytes = double(m.batch) / s.dp *
                             (double(m.seq_len) / s.ring) * kv_heads_per_rank *
                             double(m.head_size()) * m.dtype_bytes;
  return 6.0 * (s.ring - 1) * block_bytes;
}

}  // namespace

CostReport comm_cost(const Strategy& s, const ModelConfig& m) {
  m.validate();
  s.validate();
  CostReport r;

  // Parameter/gradient traffic: the table's literal constants on the
  // per-block parameter volume (1.5x once stage-3 regathers parameters).
  const double params =
      double(m.params_per_block()) / s.tp * m.dtype_bytes;
  if (s.zero_group() == 1) {
    r.param_comm_bytes = 0;
    r.param_comm_op = "0";
  } else if (s.zero_stage == 3) {
    r.param_comm_bytes = params * 1.5;
    r.param_comm_op = "2*allgather+reducescatter";
  } else if (s.zero_stage >= 1) {
    r.param_comm_bytes = params;
    r.param_comm_op = "allgather+reducescatter";
  } else {
    r.param_comm_bytes = params;
    r.param_comm_op = "allreduce";
  }

  // Activation traffic per block, fwd+bwd, whole-tensor convention.
  const double hidden_state =
      double(m.batch) * m.seq_len * m.hidden * m.dtype_bytes;
  double act = 0;
  std::ostringstream act_op;
  if (s.tp > 1) {
    act += 8.0 * hidden_state;
    act_op << (s.tp_sp ? "4*allgather+4*reducescatter" : "4*allreduce");
  }
  if (s.ulysses > 1) {
    // Q and O move whole; K and V shrink by the GQA group factor.
    act += 4.0 * hidden_state + 4.0 * hidden_state / double(m.gqa_group());
    act_op << (act_op.tellp() > 0 ? "+" : "") << "8*all2all";
  }
  if (s.ring > 1) {
    act_op << (act_op.tellp() > 0 ? "+" : "") << "P2P";
  }
  if (act_op.tellp() == 0) act_op << "0";
  r.act_comm_bytes = act;
  r.act_comm_op = act_op.str();

  r.ring_p2p_bytes = ring_p2p_rank_bytes(s, m);
  if (s.ring > 1) {
    r.overlap_note =
        "overlappable with compute; per rank, fwd 2 and bwd 4 block buffers "
        "each travel ring-1 hops";
  }
  return r;
}

MemoryCost memory_cost(const Strategy& s, const ModelConfig& m) {
  m.validate();
  s.validate();
  MemoryCost mem;
  const double params_dev = double(m.params_per_block()) * m.layers /
                            (double(s.tp) * s.pp) * m.dtype_bytes;
  const double zero_n = s.zero_group();
  mem.p_bytes = s.zero_stage >= 3 ? params_dev / zero_n : params_dev;
  mem.g_bytes = s.zero_stage >= 2 ? params_dev / zero_n : params_dev;
  // fp32 master weights, momentum and variance: 6x the fp16 parameters.
  const double os_full = 6.0 * params_dev;
  mem.os_bytes = s.zero_stage >= 1 ? os_full / zero_n : os_full;

  const double act_total = m.act_multiplier * double(m.batch) * m.seq_len *
                           m.hidden * m.dtype_bytes * m.layers;
  double act = act_total / (double(s.dp) * s.ulysses * s.ring * s.pp);
  if (s.tp > 1) {
    act = s.tp_sp ? act / s.tp : act * m.tp_act_alpha;
  }
  mem.act_bytes = act;
  return mem;
}

namespace {

// Tip-style placement: dimension strides innermost-first tp, ulysses, ring,
// dp, pp. A dimension "spans nodes" if any of its groups has members on two
// nodes.
bool dim_spans_nodes(int stride, int degree, int total, int per_node) {
  if (degree <= 1) return false;
  for (int base = 0; base < total; ++base) {
    if ((base / stride) % degree != 0) continue;  // not a group anchor
    const int first_node = base / per_node;
    const int last_node = (base + stride * (degree - 1)) / per_node;
    if (first_node != last_node) return true;
  }
  return false;
}

double link_bw(bool spans, const ClusterConfig& c) {
  return spans ? c.inter_bw : c.intra_bw;
}

}  // namespace

StepTimeBreakdown estimate_step_time(const Strategy& s, const ModelConfig& m,
                                     const ClusterConfig& c) {
  m.validate();
  s.validate();
  c.validate();
  if (s.degree_product() > c.devices) {
    std::ostringstream os;
    os << "strategy needs " << s.degree_product() << " devices but the "
       << "cluster has " << c.devices;
    throw_invalid(os.str());
  }

  const int total = s.degree_product();
  const int stride_tp = 1;
  const int stride_u = s.tp;
  const int stride_r = s.tp * s.ulysses;
  const int stride_zero = s.tp;  // dp x sp group: contiguous over u, r, dp

  StepTimeBreakdown b;
  b.tp_spans_nodes =
      dim_spans_nodes(stride_tp, s.tp, total, c.devices_per_node);
  b.ulysses_spans_nodes =
      dim_spans_nodes(stride_u, s.ulysses, total, c.devices_per_node);
  b.ring_spans_nodes =
      dim_spans_nodes(stride_r, s.ring, total, c.devices_per_node);
  b.zero_spans_nodes =
      dim_spans_nodes(stride_zero, s.zero_group(), total, c.devices_per_node);

  const double layers_per_stage = double(m.layers) / s.pp;

  // Parameter/gradient collectives over the combined dp x sp group.
  if (s.zero_group() > 1) {
    const double param_bytes = double(m.params_per_block()) / s.tp *
                               layers_per_stage * m.dtype_bytes;
    const double bw = link_bw(b.zero_spans_nodes, c);
    const int n = s.zero_group();
    using simcomm::CollectiveKind;
    if (s.zero_stage == 0) {
      b.param_s = param_bytes * algobw_factor(CollectiveKind::kAllReduce, n) /
                      bw + c.latency_s;
    } else {
      const int events = s.zero_stage == 3 ? 3 : 2;
      b.param_s = events * (param_bytes *
                                algobw_factor(CollectiveKind::kAllGather, n) /
                                bw +
                            c.latency_s);
    }
  }

  // Per-rank activation shard entering each attention collective.
  const double tokens_local = double(m.seq_len) / (s.ulysses * s.ring);
  const double batch_local = double(m.batch) / s.dp;

  if (s.tp > 1) {
    const double hidden_local = batch_local *
                                (double(m.seq_len) / s.sp_degree()) *
                                m.hidden * m.dtype_bytes;
    const double bw = link_bw(b.tp_spans_nodes, c);
    using simcomm::CollectiveKind;
    double per_block;
    if (s.tp_sp) {
      per_block = 8 * (hidden_local *
                           algobw_factor(CollectiveKind::kAllGather, s.tp) /
                           bw +
                       c.latency_s);
    } else {
      per_block = 4 * (hidden_local *
                           algobw_factor(CollectiveKind::kAllReduce, s.tp) /
                           bw +
                       c.latency_s);
    }
    b.tp_act_s = per_block * layers_per_stage;
  }

  if (s.ulysses > 1) {
    const double q_like = batch_local * tokens_local *
                          (double(m.heads) / s.tp) * m.head_size() *
                          m.dtype_bytes;
    const double kv_like = batch_local * tokens_local *
                           (double(m.kv_heads) / s.tp) * m.head_size() *
                           m.dtype_bytes;
    const double bw = link_bw(b.ulysses_spans_nodes, c);
    const double factor =
        algobw_factor(simcomm::CollectiveKind::kAllToAll, s.ulysses);
    const double per_block =
        4 * (q_like * factor / bw + c.latency_s) +
        4 * (kv_like * factor / bw + c.latency_s);
    b.ulysses_act_s = per_block * layers_per_stage;
  }

  if (s.ring > 1) {
    const double bw = link_bw(b.ring_spans_nodes, c);
    const double p2p_bytes = ring_p2p_rank_bytes(s, m) * layers_per_stage;
    const double hops = 6.0 * (s.ring - 1) * layers_per_stage;
    const double raw = p2p_bytes / bw + hops * c.latency_s;
    b.ring_p2p_s = std::max(0.0, raw - c.overlap_budget_s);
  }

  b.total_s = b.param_s + b.tp_act_s + b.ulysses_act_s + b.ring_p2p_s;
  return b;
}

CostReport full_report(const Strategy& s, const ModelConfig& m,
                       const ClusterConfig& c) {
  CostReport r = comm_cost(s, m);
  r.memory = memory_cost(s, m);
  r.est_step_time_s = estimate_step_time(s, m, c).total_s;
  return r;
}

namespace {

std::string human_bytes(double b) {
  const char* units[] = {"B", "KiB", "MiB", "GiB", "TiB"};
  int u = 0;
  while (b >= 1024.0 && u < 4) {
    b /= 1024.0;
    ++u;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f%s", b, units[u]);
  return buf;
}

// Largest ulysses degree that divides both the sp degree and the kv head
// count; the rest goes to the ring.
int best_ulysses_split(int sp, int64_t kv_heads) {
  int best = 1;
  for (int u = 1; u <= sp; ++u) {
    if (sp % u == 0 && kv_heads % u == 0 && u <= kv_heads) best = u;
  }
  return best;
}

}  // namespace

std::string render_cost_table(const ModelConfig& m, const ClusterConfig& c) {
  m.validate();
  c.validate();
  const int n = c.devices;
  const int u_best = best_ulysses_split(n, m.kv_heads);

  struct Row {
    std::string name;
    Strategy s;
  };
  std::vector<Row> rows;
  if (n <= m.kv_heads && m.kv_heads % n == 0) {
    rows.push_back({"SP-Ulysses", {1, n, 1, 1, 1, 0, true}});
  }
  rows.push_back({"SP-Ring", {1, 1, n, 1, 1, 0, true}});
  rows.push_back({"DP", {1, 1, 1, n, 1, 0, true}});
  rows.push_back({"ZeRO1", {1, 1, 1, n, 1, 1, true}});
  const Strategy unified{1, u_best, n / u_best, 1, 1, 1, true};
  Strategy unified2 = unified;
  unified2.zero_stage = 2;
  Strategy unified3 = unified;
  unified3.zero_stage = 3;
  rows.push_back({"SP-Unified+ZeRO1", unified});
  rows.push_back({"SP-Unified+ZeRO2", unified2});
  rows.push_back({"SP-Unified+ZeRO3", unified3});
  if (m.heads % n == 0) {
    rows.push_back({"TP", {n, 1, 1, 1, 1, 0, false}});
    rows.push_back({"TP-sp", {n, 1, 1, 1, 1, 0, true}});
  }

  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-18s %-28s %12s %-28s %12s %12s %10s %10s %10s\n",
                "strategy", "param-op", "param", "act-op", "act", "ring-p2p",
                "P/G", "OS", "Act");
  os << line;
  for (const auto& row : rows) {
    const auto r = comm_cost(row.s, m);
    const auto mem = memory_cost(row.s, m);
    std::snprintf(line, sizeof(line),
                  "%-18s %-28s %12s %-28s %12s %12s %10s %10s %10s\n",
                  row.name.c_str(), r.param_comm_op.c_str(),
                  human_bytes(r.param_comm_bytes).c_str(),
                  r.act_comm_op.c_str(), human_bytes(r.act_comm_bytes).c_str(),
                  human_bytes(r.ring_p2p_bytes).c_str(),
                  human_bytes(mem.p_bytes + mem.g_bytes).c_str(),
                  human_bytes(mem.os_bytes).c_str(),
                  human_bytes(mem.act_bytes).c_str());
    os << line;
  }
  return os.str();
}

ModelConfig model_from_json(const nlohmann::json& j) {
  ModelConfig m;
  try {
    m.seq_len = j.at("seq_len").get<int64_t>();
    m.hidden = j.at("hidden").get<int64_t>();
    m.heads = j.at("heads").get<int64_t>();
    m.kv_heads = j.value("kv_heads", m.heads);
    m.batch = j.value("batch", int64_t(1));
    m.layers = j.value("layers", int64_t(1));
    m.dtype_bytes = j.value("dtype_bytes", 2);
    const std::string formula = j.value("param_formula", std::string("gpt"));
    if (formula == "gpt") {
      m.param_formula = ModelConfig::ParamFormula::kGpt;
    } else if (formula == "custom") {
      m.param_formula = ModelConfig::ParamFormula::kCustom;
      m.custom_params_per_block = j.at("custom_params_per_block").get<int64_t>();
    } else {
      throw_invalid("param_formula must be \"gpt\" or \"custom\"");
    }
    m.act_multiplier = j.value("act_multiplier", 1.0);
    m.tp_act_alpha = j.value("tp_act_alpha", 0.5);
  } catch (const nlohmann::json::exception& e) {
    throw_invalid(std::string("model config: ") + e.what());
  }
  m.validate();
  return m;
}

ClusterConfig cluster_from_json(const nlohmann::json& j) {
  ClusterConfig c;
  try {
    c.devices = j.at("devices").get<int>();
    c.devices_per_node = j.value("devices_per_node", c.devices);
    c.intra_bw = j.value("intra_bw", 1.0);
    c.inter_bw = j.value("inter_bw", c.intra_bw);
    c.memory_bytes = j.value("memory_bytes", 0.0);
    c.latency_s = j.value("latency_s", 0.0);
    c.overlap_budget_s = j.value("overlap_budget_s", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw_invalid(std::string("cluster config: ") + e.what());
  }
  c.validate();
  return c;
}

Strategy strategy_from_json(const nlohmann::json& j) {
  Strategy s;
  try {
    s.tp = j.value("tp", 1);
    s.ulysses = j.value("ulysses", 1);
    s.ring = j.value("ring", 1);
    s.dp = j.value("dp", 1);
    s.pp = j.value("pp", 1);
    s.zero_stage = j.value("zero_stage", 0);
    s.tp_sp = j.value("tp_sp", true);
  } catch (const nlohmann::json::exception& e) {
    throw_invalid(std::string("strategy: ") + e.what());
  }
  s.validate();
  return s;
}

nlohmann::json to_json(const Strategy& s) {
  return {{"tp", s.tp},       {"ulysses", s.ulysses},
          {"ring", s.ring},   {"dp", s.dp},
          {"pp", s.pp},       {"zero_stage", s.zero_stage},
          {"tp_sp", s.tp_sp}};
}

nlohmann::json to_json(const CostReport& r) {
  return {{"param_comm_bytes", r.param_comm_bytes},
          {"param_comm_op", r.param_comm_op},
          {"act_comm_bytes", r.act_comm_bytes},
          {"act_comm_op", r.act_comm_op},
          {"ring_p2p_bytes", r.ring_p2p_bytes},
          {"overlap_note", r.overlap_note},
          {"memory",
           {{"p_bytes", r.memory.p_bytes},
            {"g_bytes", r.memory.g_bytes},
            {"os_bytes", r.memory.os_bytes},
            {"act_bytes", r.memory.act_bytes},
            {"total_bytes", r.memory.total()}}},
          {"est_step_time_s", r.est_step_time_s}};
}

}  // namespace uspsim::costmodel
