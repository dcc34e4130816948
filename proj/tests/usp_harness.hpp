// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

#include "common/random.hpp"
#include "simcomm/mesh.hpp"
#include "simcomm/world.hpp"
#include "usp/partition.hpp"
#include "usp/usp_attention.hpp"

namespace uspsim::testutil {

struct UspCase {
  int64_t bs = 1, seq = 8, hc = 2, kv_hc = 2, hs = 4;
  int ulysses = 1, ring = 1;
  bool causal = false;
  uint64_t seed = 1234;
};

template <class T>
struct UspGlobals {
  numerics::Tensor4<T> q, k, v, dout;
};

// Global tensors drawn in a fixed order (Q, K, V, dO) so every factorization
// of the same case sees identical data.
template <class T>
UspGlobals<T> make_globals(const UspCase& c) {
  UniformSource src(c.seed);
  UspGlobals<T> g{numerics::Tensor4<T>(c.bs, c.seq, c.hc, c.hs),
                  numerics::Tensor4<T>(c.bs, c.seq, c.kv_hc, c.hs),
                  numerics::Tensor4<T>(c.bs, c.seq, c.kv_hc, c.hs),
                  numerics::Tensor4<T>(c.bs, c.seq, c.hc, c.hs)};
  for (auto* t : {&g.q, &g.k, &g.v, &g.dout}) {
    for (auto& x : t->data()) x = static_cast<T>(src.next(-1.0, 1.0));
  }
  return g;
}

template <class T>
struct UspRun {
  numerics::Tensor4<T> out, dq, dk, dv;  // gathered back to original order
  simcomm::CommLedger ledger;
};

// Shards the globals (zigzag when causal), runs forward+backward on a
// U x R world, and reassembles the outputs in original token order.
template <class T>
UspRun<T> run_usp_fwd_bwd(const UspCase& c, const UspGlobals<T>& g) {
  const simcomm::ProcessMesh mesh(c.ulysses, c.ring);
  const usp::ShardSpec spec(mesh, c.seq, /*zigzag=*/c.causal);

  struct PerRank {
    numerics::Tensor4<T> out, dq, dk, dv;
    std::vector<int64_t> positions;
  };
  auto world = simcomm::World::run<PerRank>(
      mesh.world_size(), [&](simcomm::RankCtx& ctx) {
        const auto positions = spec.positions_for(ctx.rank());
        const auto q_s = usp::extract_rows(g.q, positions);
        const auto k_s = usp::extract_rows(g.k, positions);
        const auto v_s = usp::extract_rows(g.v, positions);
        const auto do_s = usp::extract_rows(g.dout, positions);

        auto fwd = usp::usp_attention(ctx, mesh, q_s, k_s, v_s, positions,
                                      c.causal);
        auto grads = usp::usp_attention_backward(ctx, mesh, fwd, do_s,
                                                 c.causal);
        return PerRank{std::move(fwd.out), std::move(grads.dq),
                       std::move(grads.dk), std::move(grads.dv), positions};
      });

  UspRun<T> run{numerics::Tensor4<T>(c.bs, c.seq, c.hc, c.hs),
                numerics::Tensor4<T>(c.bs, c.seq, c.hc, c.hs),
                numerics::Tensor4<T>(c.bs, c.seq, c.kv_hc, c.hs),
                numerics::Tensor4<T>(c.bs, c.seq, c.kv_hc, c.hs),
                std::move(world.ledger)};
  for (const auto& pr : world.per_rank) {
    usp::place_rows(run.out, pr.out, pr.positions);
    usp::place_rows(run.dq, pr.dq, pr.positions);
    usp::place_rows(run.dk, pr.dk, pr.positions);
    usp::place_rows(run.dv, pr.dv, pr.positions);
  }
  return run;
}

}  // namespace uspsim::testutil
