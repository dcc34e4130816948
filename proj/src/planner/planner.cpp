// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include "planner/planner.hpp"

#include <algorithm>
#include <sstream>
#include <tuple>

#include "common/error.hpp"

namespace uspsim::planner {

using costmodel::ClusterConfig;
using costmodel::ModelConfig;
using costmodel::Strategy;

RankCoords coords_of_rank(const Strategy& s, int rank) {
  if (rank < 0 || rank >= s.degree_product()) {
    throw_invalid("rank outside the strategy's device grid");
  }
  RankCoords c;
  c.tp = rank % s.tp;
  rank /= s.tp;
  c.ulysses = rank % s.ulysses;
  rank /= s.ulysses;
  c.ring = rank % s.ring;
  rank /= s.ring;
  c.dp = rank % s.dp;
  rank /= s.dp;
  c.pp = rank;
  return c;
}

int rank_of_coords(const Strategy& s, const RankCoords& c) {
  if (c.tp < 0 || c.tp >= s.tp || c.ulysses < 0 || c.ulysses >= s.ulysses ||
      c.ring < 0 || c.ring >= s.ring || c.dp < 0 || c.dp >= s.dp || c.pp < 0 ||
      c.pp >= s.pp) {
    throw_invalid("coordinates outside the strategy's device grid");
  }
  return (((c.pp * s.dp + c.dp) * s.ring + c.ring) * s.ulysses + c.ulysses) *
             s.tp +
         c.tp;
}

std::string group_order(const Strategy& s) {
  std::ostringstream os;
  os << "tp(" << s.tp << ") -> ulysses(" << s.ulysses << ") -> ring(" << s.ring
     << ") -> dp(" << s.dp << ") -> pp(" << s.pp << ")";
  return os.str();
}

namespace {

Verdict rejected(std::string rule, std::string detail) {
  return Verdict{false, std::move(rule), std::move(detail)};
}

}  // namespace

Verdict check_feasibility(const Strategy& s, const ModelConfig& m,
                          const ClusterConfig& c) {
  s.validate();
  m.validate();
  c.validate();

  if (s.degree_product() != c.devices) {
    std::ostringstream os;
    os << "degrees multiply to " << s.degree_product() << " but the cluster "
       << "has " << c.devices << " devices";
    return rejected("degree-product", os.str());
  }

  const int head_sharding = s.tp * s.ulysses;
  if (head_sharding > m.kv_heads || m.kv_heads % head_sharding != 0) {
    std::ostringstream os;
    os << "tp*ulysses = " << head_sharding
       << " must divide the kv head count " << m.kv_heads
       << "; head-sharded degrees cannot exceed the number of attention "
          "heads";
    return rejected("head-limit", os.str());
  }
  if (m.heads % s.tp != 0) {
    std::ostringstream os;
    os << "tp = " << s.tp << " does not divide the query head count "
       << m.heads;
    return rejected("tp-head-divisibility", os.str());
  }
  if (s.dp > m.batch || m.batch % s.dp != 0) {
    std::ostringstream os;
    os << "dp = " << s.dp << " does not divide the global batch " << m.batch;
    return rejected("batch-split", os.str());
  }
  if (m.seq_len % int64_t(2 * s.ring) != 0 ||
      (m.seq_len / s.ring) % s.ulysses != 0) {
    std::ostringstream os;
    os << "sequence length " << m.seq_len << " cannot be zigzag-partitioned "
       << "over ring=" << s.ring << ", ulysses=" << s.ulysses;
    return rejected("sequence-divisibility", os.str());
  }
  if (m.layers % int64_t(s.pp) != 0) {
    std::ostringstream os;
    os << "pp = " << s.pp << " does not divide the layer count " << m.layers;
    return rejected("pp-layers", os.str());
  }
  if (s.sp_degree() > 1 && s.zero_stage < 1) {
    return rejected("zero-with-sp",
                    "sequence parallelism replicates the optimizer states "
                    "across the sp group; use stage >= 1 sharding whenever "
                    "the sp degree exceeds 1");
  }
  if (c.memory_bytes > 0) {
    const auto mem = costmodel::memory_cost(s, m);
    if (mem.total() > c.memory_bytes) {
      std::ostringstream os;
      os << "modeled memory " << mem.total() << " bytes exceeds the device "
         << "capacity " << c.memory_bytes << " bytes (deficit "
         << mem.total() - c.memory_bytes << ")";
      return rejected("memory-capacity", os.str());
    }
  }
  return Verdict{true, "", "fits all constraints"};
}

namespace {

void append_divisors(int n, std::vector<int>& out) {
  for (int d = 1; d <= n; ++d) {
    if (n % d == 0) out.push_back(d);
  }
}

bool pinned_out(const std::optional<int>& pin, int value) {
  return pin.has_value() && *pin != value;
}

}  // namespace

std::vector<PlanCandidate> enumerate_strategies(const ModelConfig& m,
                                                const ClusterConfig& c,
                                                const PlannerOptions& options) {
  m.validate();
  c.validate();
  const int n = c.devices;

  std::vector<PlanCandidate> candidates;
  std::vector<int> tps, us, rs, dps;
  append_divisors(n, tps);
  for (int tp : tps) {
    if (pinned_out(options.tp, tp)) continue;
    us.clear();
    append_divisors(n / tp, us);
    for (int u : us) {
      if (pinned_out(options.ulysses, u)) continue;
      rs.clear();
      append_divisors(n / (tp * u), rs);
      for (int r : rs) {
        if (pinned_out(options.ring, r)) continue;
        dps.clear();
        append_divisors(n / (tp * u * r), dps);
        for (int dp : dps) {
          if (pinned_out(options.dp, dp)) continue;
          const int pp = n / (tp * u * r * dp);
          if (pinned_out(options.pp, pp)) continue;
          // sharding over a singleton dp x sp group is the identity
          const int zero_max = (u * r * dp == 1) ? 0 : 3;
          for (int zero = 0; zero <= zero_max; ++zero) {
            if (pinned_out(options.zero_stage, zero)) continue;
            Strategy s;
            s.tp = tp;
            s.ulysses = u;
            s.ring = r;
            s.dp = dp;
            s.pp = pp;
            s.zero_stage = zero;
            s.tp_sp = true;
            PlanCandidate cand;
            cand.strategy = s;
            cand.verdict = check_feasibility(s, m, c);
            cand.rank_order = group_order(s);
            if (cand.verdict.ok) {
              cand.report = costmodel::full_report(s, m, c);
            }
            candidates.push_back(std::move(cand));
          }
        }
      }
    }
  }

  // A strategy that only failed on memory while some head-sharded (tp > 1)
  // sibling fits gets the comparative note: trading tp-sp away for sp does
  // not extend the trainable sequence length.
  const bool tp_variant_fits = std::any_of(
      candidates.begin(), candidates.end(), [](const PlanCandidate& cand) {
        return cand.verdict.ok && cand.strategy.tp > 1;
      });
  if (tp_variant_fits) {
    for (auto& cand : candidates) {
      if (!cand.verdict.ok && cand.verdict.rule == "memory-capacity" &&
          cand.strategy.tp == 1 && cand.strategy.sp_degree() > 1) {
        cand.verdict.detail +=
            "; a tp-sp strategy fits this model in memory, and switching it "
            "to sp cannot increase the trainable sequence length";
      }
    }
  }

  rank_plans(candidates);
  if (!options.include_rejected) {
    std::erase_if(candidates, [](const PlanCandidate& cand) {
      return !cand.verdict.ok;
    });
  }
  return candidates;
}

void rank_plans(std::vector<PlanCandidate>& candidates) {
  auto tuple_of = [](const Strategy& s) {
    return std::make_tuple(s.tp, s.ulysses, s.ring, s.dp, s.pp, s.zero_stage);
  };
  std::stable_sort(
      candidates.begin(), candidates.end(),
      [&](const PlanCandidate& a, const PlanCandidate& b) {
        if (a.verdict.ok != b.verdict.ok) return a.verdict.ok;
        if (!a.verdict.ok) {
          if (a.verdict.rule != b.verdict.rule) {
            return a.verdict.rule < b.verdict.rule;
          }
          return tuple_of(a.strategy) < tuple_of(b.strategy);
        }
        if (a.report.est_step_time_s != b.report.est_step_time_s) {
          return a.report.est_step_time_s < b.report.est_step_time_s;
        }
        if (a.strategy.ring != b.strategy.ring) {
          return a.strategy.ring < b.strategy.ring;
        }
        if (a.strategy.tp != b.strategy.tp) {
          return a.strategy.tp < b.strategy.tp;
        }
        return tuple_of(a.strategy) < tuple_of(b.strategy);
      });
}

nlohmann::json to_json(const PlanCandidate& c) {
  nlohmann::json j;
  j["strategy"] = costmodel::to_json(c.strategy);
  j["feasible"] = c.verdict.ok;
  if (!c.verdict.ok) j["rule"] = c.verdict.rule;
  j["detail"] = c.verdict.detail;
  j["rank_order"] = c.rank_order;
  if (c.verdict.ok) j["report"] = costmodel::to_json(c.report);
  return j;
}

}  // namespace uspsim::planner
