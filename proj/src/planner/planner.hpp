// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "costmodel/costmodel.hpp"

namespace uspsim::planner {

// Mixed-radix coordinates of a global rank under the canonical process-group
// ordering: tp innermost, then ulysses, ring, dp, and pp outermost, i.e.
// rank = ((((pp*DP + dp)*R + r)*U + u)*TP + tp.
struct RankCoords {
  int tp = 0, ulysses = 0, ring = 0, dp = 0, pp = 0;
  bool operator==(const RankCoords&) const = default;
};

RankCoords coords_of_rank(const costmodel::Strategy& s, int rank);
int rank_of_coords(const costmodel::Strategy& s, const RankCoords& c);

// Rendering of the nested layout, innermost dimension first.
std::string group_order(const costmodel::Strategy& s);

struct Verdict {
  bool ok = false;
  std::string rule;    // stable id of the governing rule, empty when ok
  std::string detail;  // human-readable explanation with numbers
};

struct PlanCandidate {
  costmodel::Strategy strategy;
  Verdict verdict;
  costmodel::CostReport report;  // complete only for feasible candidates
  std::string rank_order;
};

struct PlannerOptions {
  std::optional<int> tp, ulysses, ring, dp, pp, zero_stage;  // pins
  bool include_rejected = true;
};

// Rule checks for one strategy, first violation wins:
//   degree-product      all degrees must multiply to the device count
//   head-limit          tp*ulysses must divide (and not exceed) the kv heads
//   tp-head-divisibility tp must divide the query head count
//   batch-split         dp must divide the global batch
//   sequence-divisibility zigzag needs L % 2r == 0 and (L/r) % u == 0
//   pp-layers           pp must divide the layer count
//   zero-with-sp        sp > 1 requires optimizer-state sharding (stage >= 1)
//   memory-capacity     modeled per-device memory must fit
Verdict check_feasibility(const costmodel::Strategy& s,
                          const costmodel::ModelConfig& m,
                          const costmodel::ClusterConfig& c);

// All strategies passing the divisibility predicates, with verdicts and cost
// reports; rejected candidates are kept (with their governing rule) unless
// options say otherwise. Deterministic order: feasible first by ascending
// estimated step time, ties by lower ring, then lower tp, then
// lexicographic (tp, ulysses, ring, dp, pp, zero).
std::vector<PlanCandidate> enumerate_strategies(
    const costmodel::ModelConfig& m, const costmodel::ClusterConfig& c,
    const PlannerOptions& options = {});

void rank_plans(std::vector<PlanCandidate>& candidates);

nlohmann::json to_json(const PlanCandidate& c);

}  // namespace uspsim::planner
