// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numeric>

#include "numerics/attention.hpp"
#include "test_util.hpp"
#include "usp_harness.hpp"

using namespace uspsim;
using namespace uspsim::numerics;
using namespace uspsim::usp;
using namespace uspsim::simcomm;
using testutil::fill_uniform;
using testutil::max_abs_diff;

TEST_CASE("zigzag partition pairs chunk p with chunk 2R-1-p") {
  const auto parts = zigzag_partition(16, 4);
  CHECK(parts[0] == std::vector<int64_t>{0, 1, 14, 15});
  CHECK(parts[1] == std::vector<int64_t>{2, 3, 12, 13});
  CHECK(parts[2] == std::vector<int64_t>{4, 5, 10, 11});
  CHECK(parts[3] == std::vector<int64_t>{6, 7, 8, 9});

  const auto identity = zigzag_partition(6, 1);
  CHECK(identity[0] == std::vector<int64_t>{0, 1, 2, 3, 4, 5});

  CHECK_THROWS_AS(zigzag_partition(10, 4), Error);  // 10 % 8 != 0
}

TEST_CASE("causal workload: even split is skewed, zigzag is flat") {
  const auto even = causal_pair_counts(even_partition(16, 4), 16);
  CHECK(even == std::vector<int64_t>{10, 26, 42, 58});
  CHECK(double(even.back()) / double(even.front()) == doctest::Approx(5.8));

  const auto zz = causal_pair_counts(zigzag_partition(16, 4), 16);
  CHECK(zz == std::vector<int64_t>{34, 34, 34, 34});
  CHECK(34 == 16 * 17 / 2 / 4);

  const auto single = causal_pair_counts(even_partition(16, 1), 16);
  CHECK(single == std::vector<int64_t>{16 * 17 / 2});
}

TEST_CASE("zigzag balance holds for every valid (L, R)") {
  for (int ring : {1, 2, 3, 4, 8}) {
    for (int64_t seq : {int64_t(2 * ring), int64_t(6 * ring),
                        int64_t(16 * ring)}) {
      const auto counts = causal_pair_counts(zigzag_partition(seq, ring), seq);
      const int64_t expected = seq * (seq + 1) / 2 / ring;
      for (int64_t c : counts) CHECK(c == expected);
    }
  }
}

TEST_CASE("even-partition skew approaches 2R-1 for long sequences") {
  const auto counts = causal_pair_counts(even_partition(4096, 4), 4096);
  const double ratio = double(counts.back()) / double(counts.front());
  CHECK(std::abs(ratio - 7.0) / 7.0 < 0.05);
}

TEST_CASE("workload validation rejects incomplete assignments") {
  CHECK_THROWS_AS(causal_pair_counts({{0, 1}, {1, 2}}, 4), Error);
  CHECK_THROWS_AS(causal_pair_counts({{0, 1}}, 4), Error);
}

TEST_CASE("shard spec cuts each ring list into ulysses sub-shards") {
  const ProcessMesh mesh(2, 2);
  const ShardSpec spec(mesh, 8, /*zigzag=*/true);
  CHECK(spec.tokens_per_rank() == 2);
  // ring rank 0 holds {0,1,6,7}; ulysses rank 0 takes the first half
  CHECK(spec.positions_for(mesh.rank_of(0, 0)) == std::vector<int64_t>{0, 1});
  CHECK(spec.positions_for(mesh.rank_of(1, 0)) == std::vector<int64_t>{6, 7});
  CHECK(spec.positions_for(mesh.rank_of(0, 1)) == std::vector<int64_t>{2, 3});
  CHECK(spec.positions_for(mesh.rank_of(1, 1)) == std::vector<int64_t>{4, 5});

  // union over ranks is exactly 0..L-1
  std::vector<int64_t> all;
  for (int r = 0; r < 4; ++r) {
    const auto p = spec.positions_for(r);
    all.insert(all.end(), p.begin(), p.end());
  }
  std::sort(all.begin(), all.end());
  std::vector<int64_t> expect(8);
  std::iota(expect.begin(), expect.end(), 0);
  CHECK(all == expect);

  CHECK_THROWS_AS(ShardSpec(mesh, 10, true), Error);   // 10 % 4 != 0
  CHECK_THROWS_AS(ShardSpec(ProcessMesh(3, 2), 8, false), Error);
}

TEST_CASE("all_to_all_4d: singleton group is the identity with zero bytes") {
  auto result = World::run<int>(1, [](RankCtx& ctx) {
    UniformSource src(5);
    Tensor4<double> x(1, 4, 2, 3);
    fill_uniform(x, src);
    const auto fwd = all_to_all_4d(ctx, ctx.world_group(), x, 2, 1);
    CHECK(fwd == x);
    return 0;
  });
  CHECK(result.ledger.total_bytes(CollectiveKind::kAllToAll) == 0.0);
}

TEST_CASE("all_to_all_4d forward: rank u keeps its head slice, tokens in "
          "source order") {
  // U=2, bs=1, 2 tokens/rank, hc=4: encode (global_token, head) in the value.
  auto result = World::run<Tensor4<double>>(2, [](RankCtx& ctx) {
    Tensor4<double> x(1, 2, 4, 1);
    for (int64_t t = 0; t < 2; ++t) {
      for (int64_t h = 0; h < 4; ++h) {
        x.at(0, t, h, 0) = 100.0 * (ctx.rank() * 2 + t) + double(h);
      }
    }
    return all_to_all_4d(ctx, ctx.world_group(), x, 2, 1);
  });
  const auto& r0 = result.per_rank[0];
  CHECK(r0.seq() == 4);
  CHECK(r0.heads() == 2);
  for (int64_t t = 0; t < 4; ++t) {
    for (int64_t h = 0; h < 2; ++h) {
      CHECK(r0.at(0, t, h, 0) == 100.0 * t + double(h));  // heads {0,1}
    }
  }
  const auto& r1 = result.per_rank[1];
  for (int64_t t = 0; t < 4; ++t) {
    for (int64_t h = 0; h < 2; ++h) {
      CHECK(r1.at(0, t, h, 0) == 100.0 * t + double(h + 2));  // heads {2,3}
    }
  }
}

TEST_CASE("all_to_all_4d forward then backward is a bitwise round-trip") {
  auto result = World::run<int>(4, [](RankCtx& ctx) {
    UniformSource src(77 + uint64_t(ctx.rank()));
    Tensor4<double> x(2, 3, 8, 5);
    fill_uniform(x, src);
    const auto fwd = all_to_all_4d(ctx, ctx.world_group(), x, 2, 1);
    const auto back = all_to_all_4d(ctx, ctx.world_group(), fwd, 1, 2);
    CHECK(back == x);
    return 0;
  });
  (void)result;
}

TEST_CASE("all_to_all_4d rejects unsupported axes and bad shapes") {
  auto run_bad_axes = [] {
    World::run<int>(2, [](RankCtx& ctx) {
      Tensor4<double> x(1, 2, 2, 2);
      all_to_all_4d(ctx, ctx.world_group(), x, 0, 3);
      return 0;
    });
  };
  CHECK_THROWS_AS(run_bad_axes(), Error);

  auto run_bad_heads = [] {
    World::run<int>(2, [](RankCtx& ctx) {
      Tensor4<double> x(1, 2, 3, 2);  // 3 heads over group of 2
      all_to_all_4d(ctx, ctx.world_group(), x, 2, 1);
      return 0;
    });
  };
  CHECK_THROWS_WITH_AS(run_bad_heads(), doctest::Contains("head count"),
                       Error);
}

TEST_CASE("positions gather and split mirror each other") {
  auto result = World::run<int>(2, [](RankCtx& ctx) {
    const std::vector<int64_t> mine = {int64_t(10 + ctx.rank()),
                                       int64_t(20 + ctx.rank())};
    const auto all = gather_positions(ctx, ctx.world_group(), mine);
    CHECK(all == std::vector<int64_t>{10, 20, 11, 21});
    const auto back = split_positions(ctx.world_group(), ctx.rank(), all);
    CHECK(back == mine);
    return 0;
  });
  (void)result;
}

namespace {

struct RingCase {
  int ring;
  int64_t seq;
  bool causal;
};

void check_ring_against_reference(const RingCase& rc) {
  const int64_t bs = 1, hc = 2, kv_hc = 1, hs = 4;
  testutil::UspCase c;
  c.bs = bs;
  c.seq = rc.seq;
  c.hc = hc;
  c.kv_hc = kv_hc;
  c.hs = hs;
  c.seed = 500 + uint64_t(rc.ring);
  const auto g = testutil::make_globals<double>(c);

  const auto assignment = rc.causal ? zigzag_partition(rc.seq, rc.ring)
                                    : even_partition(rc.seq, rc.ring);

  struct PerRank {
    Tensor4<double> out;
    std::vector<int64_t> positions;
  };
  auto world = World::run<PerRank>(rc.ring, [&](RankCtx& ctx) {
    const auto& positions = assignment[size_t(ctx.rank())];
    const auto q_s = extract_rows(g.q, positions);
    const auto k_s = extract_rows(g.k, positions);
    const auto v_s = extract_rows(g.v, positions);
    auto res = ring_attention(ctx, ctx.world_group(), q_s, k_s, v_s,
                              positions, rc.causal);
    return PerRank{std::move(res.out), positions};
  });

  Tensor4<double> gathered(bs, rc.seq, hc, hs);
  for (const auto& pr : world.per_rank) {
    place_rows(gathered, pr.out, pr.positions);
  }
  const auto ref = reference_attention(g.q, g.k, g.v, rc.causal);
  CHECK(max_abs_diff(gathered, ref) < 1e-12);

  // each circulated tensor (K and V) is shifted exactly R-1 times
  CHECK(world.ledger.event_count(CollectiveKind::kRingShift) ==
        2 * (rc.ring - 1));
}

}  // namespace

TEST_CASE("ring attention matches the reference for R=1, R=2, zigzag R=4") {
  check_ring_against_reference({1, 8, false});
  check_ring_against_reference({1, 8, true});
  check_ring_against_reference({2, 8, false});
  check_ring_against_reference({4, 16, true});
  check_ring_against_reference({4, 16, false});
}

TEST_CASE("ring attention backward: zero cotangent, oracle comparison") {
  const int64_t bs = 1, hc = 2, kv_hc = 2, hs = 3;
  for (const auto& rc : {RingCase{2, 8, false}, RingCase{4, 16, true}}) {
    testutil::UspCase c;
    c.bs = bs;
    c.seq = rc.seq;
    c.hc = hc;
    c.kv_hc = kv_hc;
    c.hs = hs;
    c.seed = 700 + uint64_t(rc.ring);
    const auto g = testutil::make_globals<double>(c);
    const auto assignment = rc.causal ? zigzag_partition(rc.seq, rc.ring)
                                      : even_partition(rc.seq, rc.ring);

    struct PerRank {
      Tensor4<double> dq, dk, dv, dq0, dk0, dv0;
      std::vector<int64_t> positions;
    };
    auto world = World::run<PerRank>(rc.ring, [&](RankCtx& ctx) {
      const auto& positions = assignment[size_t(ctx.rank())];
      const auto q_s = extract_rows(g.q, positions);
      const auto k_s = extract_rows(g.k, positions);
      const auto v_s = extract_rows(g.v, positions);
      const auto do_s = extract_rows(g.dout, positions);
      auto fwd = ring_attention(ctx, ctx.world_group(), q_s, k_s, v_s,
                                positions, rc.causal);
      const std::span<const double> lse(fwd.logsumexp);
      auto grads =
          ring_attention_backward(ctx, ctx.world_group(), q_s, k_s, v_s,
                                  fwd.out, do_s, lse, positions, rc.causal);
      // zero cotangent: all-zero gradients on every rank
      Tensor4<double> zero(q_s.batch(), q_s.seq(), q_s.heads(),
                           q_s.head_size());
      auto zg =
          ring_attention_backward(ctx, ctx.world_group(), q_s, k_s, v_s,
                                  fwd.out, zero, lse, positions, rc.causal);
      return PerRank{std::move(grads.dq), std::move(grads.dk),
                     std::move(grads.dv), std::move(zg.dq), std::move(zg.dk),
                     std::move(zg.dv), positions};
    });

    Tensor4<double> dq(bs, rc.seq, hc, hs), dk(bs, rc.seq, kv_hc, hs),
        dv(bs, rc.seq, kv_hc, hs);
    for (const auto& pr : world.per_rank) {
      place_rows(dq, pr.dq, pr.positions);
      place_rows(dk, pr.dk, pr.positions);
      place_rows(dv, pr.dv, pr.positions);
      for (double x : pr.dq0.data()) CHECK(x == 0.0);
      for (double x : pr.dk0.data()) CHECK(x == 0.0);
      for (double x : pr.dv0.data()) CHECK(x == 0.0);
    }
    const auto ref =
        reference_attention_grad(g.q, g.k, g.v, g.dout, rc.causal);
    CHECK(max_abs_diff(dq, ref.dq) < 1e-10);
    CHECK(max_abs_diff(dk, ref.dk) < 1e-10);
    CHECK(max_abs_diff(dv, ref.dv) < 1e-10);
  }
}

TEST_CASE("usp degenerate mesh equals the reference directly") {
  testutil::UspCase c;
  c.bs = 2;
  c.seq = 8;
  c.hc = 4;
  c.kv_hc = 2;
  c.hs = 4;
  c.ulysses = 1;
  c.ring = 1;
  c.causal = true;
  const auto g = testutil::make_globals<double>(c);
  const auto run = testutil::run_usp_fwd_bwd(c, g);
  const auto ref = reference_attention(g.q, g.k, g.v, true);
  CHECK(max_abs_diff(run.out, ref) < 1e-13);
  CHECK(run.ledger.total_bytes(CollectiveKind::kAllToAll) == 0.0);
  CHECK(run.ledger.total_bytes(CollectiveKind::kRingShift) == 0.0);
}

TEST_CASE("usp attention agrees with the oracle across factorizations") {
  for (const auto& [u, r] : std::vector<std::pair<int, int>>{
           {1, 8}, {2, 4}, {4, 2}, {8, 1}}) {
    for (bool causal : {false, true}) {
      testutil::UspCase c;
      c.bs = 1;
      c.seq = 32;
      c.hc = 8;
      c.kv_hc = 8;
      c.hs = 4;
      c.ulysses = u;
      c.ring = r;
      c.causal = causal;
      c.seed = 4242;
      const auto g = testutil::make_globals<double>(c);
      const auto run = testutil::run_usp_fwd_bwd(c, g);

      const auto ref = reference_attention(g.q, g.k, g.v, causal);
      const auto refg =
          reference_attention_grad(g.q, g.k, g.v, g.dout, causal);
      CHECK(max_abs_diff(run.out, ref) < 1e-12);
      CHECK(max_abs_diff(run.dq, refg.dq) < 1e-10);
      CHECK(max_abs_diff(run.dk, refg.dk) < 1e-10);
      CHECK(max_abs_diff(run.dv, refg.dv) < 1e-10);
    }
  }
}

TEST_CASE("usp with grouped kv heads agrees with the oracle") {
  testutil::UspCase c;
  c.bs = 2;
  c.seq = 16;
  c.hc = 8;
  c.kv_hc = 2;
  c.hs = 4;
  c.ulysses = 2;
  c.ring = 2;
  c.causal = true;
  c.seed = 999;
  const auto g = testutil::make_globals<double>(c);
  const auto run = testutil::run_usp_fwd_bwd(c, g);
  const auto ref = reference_attention(g.q, g.k, g.v, true);
  const auto refg = reference_attention_grad(g.q, g.k, g.v, g.dout, true);
  CHECK(max_abs_diff(run.out, ref) < 1e-12);
  CHECK(max_abs_diff(run.dq, refg.dq) < 1e-10);
  CHECK(max_abs_diff(run.dk, refg.dk) < 1e-10);
  CHECK(max_abs_diff(run.dv, refg.dv) < 1e-10);
}

TEST_CASE("fp32 path stays within its wider tolerance") {
  testutil::UspCase c;
  c.bs = 1;
  c.seq = 16;
  c.hc = 4;
  c.kv_hc = 4;
  c.hs = 4;
  c.ulysses = 2;
  c.ring = 2;
  c.causal = true;
  c.seed = 321;
  const auto g = testutil::make_globals<float>(c);
  const auto run = testutil::run_usp_fwd_bwd(c, g);
  const auto ref = reference_attention(g.q, g.k, g.v, true);
  CHECK(max_abs_diff(run.out, ref) < 1e-4);
}

TEST_CASE("comm accounting: 8 all2all per layer, GQA byte ratio, R-1 shifts") {
  testutil::UspCase c;
  c.bs = 2;
  c.seq = 16;
  c.hc = 8;
  c.kv_hc = 2;
  c.hs = 4;
  c.ulysses = 2;
  c.ring = 2;
  c.causal = true;
  c.seed = 31337;
  const auto g = testutil::make_globals<double>(c);
  const auto run = testutil::run_usp_fwd_bwd(c, g);

  // exactly 8 all-to-all events per ulysses group: Q,K,V,O + dO,dQ,dK,dV
  std::map<std::string, std::vector<const LedgerEntry*>> a2a_by_group;
  const auto entries = run.ledger.entries();
  for (const auto& e : entries) {
    if (e.kind == CollectiveKind::kAllToAll) {
      a2a_by_group[e.group].push_back(&e);
    }
  }
  CHECK(a2a_by_group.size() == 2);  // R ulysses groups
  for (auto& [group, events] : a2a_by_group) {
    REQUIRE(events.size() == 8);
    std::sort(events.begin(), events.end(),
              [](auto* a, auto* b) { return a->step < b->step; });
    const double q_bytes = events[0]->bytes_sent[0];
    const double k_bytes = events[1]->bytes_sent[0];
    const double v_bytes = events[2]->bytes_sent[0];
    const double o_bytes = events[3]->bytes_sent[0];
    const double do_bytes = events[4]->bytes_sent[0];
    const double dk_bytes = events[6]->bytes_sent[0];
    const double dv_bytes = events[7]->bytes_sent[0];
    const double ratio = double(c.kv_hc) / double(c.hc);
    CHECK(k_bytes == q_bytes * ratio);
    CHECK(v_bytes == q_bytes * ratio);
    CHECK(dk_bytes == q_bytes * ratio);
    CHECK(dv_bytes == q_bytes * ratio);
    CHECK(o_bytes == q_bytes);
    CHECK(do_bytes == q_bytes);
  }

  // six circulated tensors (K,V fwd; K,V,dK,dV bwd), each R-1 shifts
  std::map<std::string, int64_t> shifts_by_group;
  for (const auto& e : entries) {
    if (e.kind == CollectiveKind::kRingShift) shifts_by_group[e.group]++;
  }
  CHECK(shifts_by_group.size() == 2);  // U ring groups
  for (const auto& [group, count] : shifts_by_group) {
    CHECK(count == 6 * (c.ring - 1));
  }
}

TEST_CASE("ulysses degree above the kv head count is rejected") {
  // llama3-8B-like: kv_hc=8 allows U=8 at SP degree 16, but not U=16.
  testutil::UspCase ok;
  ok.seq = 32;
  ok.hc = 8;
  ok.kv_hc = 8;
  ok.hs = 2;
  ok.ulysses = 8;
  ok.ring = 2;
  ok.causal = true;
  const auto g_ok = testutil::make_globals<double>(ok);
  CHECK_NOTHROW(testutil::run_usp_fwd_bwd(ok, g_ok));

  testutil::UspCase bad = ok;
  bad.ulysses = 16;
  bad.ring = 1;
  const auto g_bad = testutil::make_globals<double>(bad);
  CHECK_THROWS_WITH_AS(testutil::run_usp_fwd_bwd(bad, g_bad),
                       doctest::Contains("cannot exceed"), Error);
}
