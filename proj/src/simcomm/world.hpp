// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <any>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "common/error.hpp"
#include "simcomm/ledger.hpp"

namespace uspsim::simcomm {

// Ordered list of distinct global ranks. Collectives concatenate and reduce
// in member-list order, so two groups with the same members in a different
// order are different groups.
class ProcessGroup {
 public:
  explicit ProcessGroup(std::vector<int> members);

  int size() const { return static_cast<int>(members_.size()); }
  const std::vector<int>& members() const { return members_; }
  const std::string& key() const { return key_; }

  bool contains(int global_rank) const;
  int local_index(int global_rank) const;  // throws if absent

 private:
  std::vector<int> members_;
  std::string key_;
};

namespace detail {
struct WorldState;
using Combine =
    std::function<void(std::vector<std::any>&, std::vector<std::any>&)>;

template <class T>
struct ElemTraits;
template <>
struct ElemTraits<float> { static constexpr const char* name = "f32"; };
template <>
struct ElemTraits<double> { static constexpr const char* name = "f64"; };
template <>
struct ElemTraits<int32_t> { static constexpr const char* name = "i32"; };
template <>
struct ElemTraits<int64_t> { static constexpr const char* name = "i64"; };
template <>
struct ElemTraits<uint8_t> { static constexpr const char* name = "u8"; };
}  // namespace detail

// Per-rank handle inside a running World. Each collective is a full barrier
// over its group; results are computed once, in member order, so every run
// of the same program yields bitwise identical outputs and ledgers.
class RankCtx {
 public:
  int rank() const { return rank_; }
  int world_size() const;
  const ProcessGroup& world_group() const { return world_group_; }

  template <class T>
  std::vector<T> all_reduce(const ProcessGroup& g, std::span<const T> x) {
    auto combine = [](std::vector<std::any>& in, std::vector<std::any>& out) {
      auto sum = std::any_cast<std::vector<T>>(in[0]);
      for (size_t j = 1; j < in.size(); ++j) {
        const auto& xj = std::any_cast<const std::vector<T>&>(in[j]);
        for (size_t e = 0; e < sum.size(); ++e) sum[e] += xj[e];
      }
      for (auto& o : out) o = sum;
    };
    auto result = collective(
        g, CollectiveKind::kAllReduce,
        signature("all_reduce", detail::ElemTraits<T>::name, x.size()),
        static_cast<int64_t>(x.size()),
        static_cast<double>(x.size() * sizeof(T)),
        std::vector<T>(x.begin(), x.end()), combine);
    return std::any_cast<std::vector<T>>(std::move(result));
  }

  template <class T>
  std::vector<T> all_gather(const ProcessGroup& g, std::span<const T> shard) {
    auto combine = [](std::vector<std::any>& in, std::vector<std::any>& out) {
      std::vector<T> cat;
      for (auto& part : in) {
        const auto& p = std::any_cast<const std::vector<T>&>(part);
        cat.insert(cat.end(), p.begin(), p.end());
      }
      for (auto& o : out) o = cat;
    };
    auto result = collective(
        g, CollectiveKind::kAllGather,
        signature("all_gather", detail::ElemTraits<T>::name, shard.size()),
        static_cast<int64_t>(shard.size()),
        static_cast<double>(g.size() * shard.size() * sizeof(T)),
        std::vector<T>(shard.begin(), shard.end()), combine);
    return std::any_cast<std::vector<T>>(std::move(result));
  }

  template <class T>
  std::vector<T> reduce_scatter(const ProcessGroup& g, std::span<const T> x) {
    if (x.size() % g.size() != 0) {
      throw_invalid("reduce_scatter payload not divisible by group size");
    }
    auto combine = [](std::vector<std::any>& in, std::vector<std::any>& out) {
      auto sum = std::any_cast<std::vector<T>>(in[0]);
      for (size_t j = 1; j < in.size(); ++j) {
        const auto& xj = std::any_cast<const std::vector<T>&>(in[j]);
        for (size_t e = 0; e < sum.size(); ++e) sum[e] += xj[e];
      }
      const size_t chunk = sum.size() / in.size();
      for (size_t i = 0; i < out.size(); ++i) {
        out[i] = std::vector<T>(sum.begin() + i * chunk,
                                sum.begin() + (i + 1) * chunk);
      }
    };
    auto result = collective(
        g, CollectiveKind::kReduceScatter,
        signature("reduce_scatter", detail::ElemTraits<T>::name, x.size()),
        static_cast<int64_t>(x.size()),
        static_cast<double>(x.size() * sizeof(T)),
        std::vector<T>(x.begin(), x.end()), combine);
    return std::any_cast<std::vector<T>>(std::move(result));
  }

  // One equally sized part per peer; returns one part from each peer, with
  // the self-part passed through untouched.
  template <class T>
  std::vector<std::vector<T>> all_to_all(const ProcessGroup& g,
                                         std::vector<std::vector<T>> parts) {
    if (static_cast<int>(parts.size()) != g.size()) {
      throw_invalid("all_to_all needs exactly one part per group member");
    }
    const size_t part_size = parts.empty() ? 0 : parts[0].size();
    for (const auto& p : parts) {
      if (p.size() != part_size) {
        throw Error(ErrorCode::kCommMismatch,
                    "all_to_all parts are ragged on the sending rank");
      }
    }
    auto combine = [](std::vector<std::any>& in, std::vector<std::any>& out) {
      const size_t n = in.size();
      for (size_t i = 0; i < n; ++i) {
        std::vector<std::vector<T>> recv(n);
        for (size_t j = 0; j < n; ++j) {
          const auto& from_j =
              std::any_cast<const std::vector<std::vector<T>>&>(in[j]);
          recv[j] = from_j[i];
        }
        out[i] = std::move(recv);
      }
    };
    auto result = collective(
        g, CollectiveKind::kAllToAll,
        signature("all_to_all", detail::ElemTraits<T>::name, part_size),
        static_cast<int64_t>(part_size * g.size()),
        static_cast<double>(g.size() * part_size * sizeof(T)),
        std::move(parts), combine);
    return std::any_cast<std::vector<std::vector<T>>>(std::move(result));
  }

  // Sends to (i+1) mod n, receives from (i-1) mod n, `steps` times.
  template <class T>
  std::vector<T> ring_shift(const ProcessGroup& g, std::span<const T> buf,
                            int steps = 1) {
    if (steps < 0) throw_invalid("ring_shift steps must be >= 0");
    const int n = g.size();
    auto combine = [steps, n](std::vector<std::any>& in,
                              std::vector<std::any>& out) {
      for (int i = 0; i < n; ++i) {
        const int src = ((i - steps) % n + n) % n;
        out[i] = std::any_cast<const std::vector<T>&>(in[src]);
      }
    };
    std::ostringstream sig;
    sig << "ring_shift<" << detail::ElemTraits<T>::name
        << ">(elements=" << buf.size() << ",steps=" << steps << ")";
    auto result = collective(
        g, CollectiveKind::kRingShift, sig.str(),
        static_cast<int64_t>(buf.size()),
        static_cast<double>(buf.size() * sizeof(T)) * steps,
        std::vector<T>(buf.begin(), buf.end()), combine);
    return std::any_cast<std::vector<T>>(std::move(result));
  }

 private:
  friend class World;
  RankCtx(detail::WorldState* state, int rank, ProcessGroup world_group)
      : state_(state), rank_(rank), world_group_(std::move(world_group)) {}

  static std::string signature(const char* op, const char* elem,
                               size_t elems) {
    std::ostringstream os;
    os << op << '<' << elem << ">(elements=" << elems << ')';
    return os.str();
  }

  std::any collective(const ProcessGroup& g, CollectiveKind kind,
                      std::string signature, int64_t payload_elems,
                      double payload_bytes, std::any input,
                      detail::Combine combine);

  detail::WorldState* state_;
  int rank_;
  ProcessGroup world_group_;
  std::map<std::string, int64_t> group_seq_;
};

// Deterministic in-process SPMD runtime: runs the same program on every rank
// on its own thread. Mismatched collectives are diagnosed (naming the
// conflicting call sites) instead of hanging.
class World {
 public:
  template <class R>
  struct Result {
    std::vector<R> per_rank;
    CommLedger ledger;
  };

  template <class R>
  static Result<R> run(int world_size,
                       const std::function<R(RankCtx&)>& program) {
    Result<R> result;
    std::vector<std::optional<R>> slots(world_size);
    result.ledger = run_spmd(world_size, [&](RankCtx& ctx) {
      slots[static_cast<size_t>(ctx.rank())] = program(ctx);
    });
    for (auto& s : slots) result.per_rank.push_back(std::move(*s));
    return result;
  }

  static CommLedger run_spmd(int world_size,
                             const std::function<void(RankCtx&)>& program);
};

}  // namespace uspsim::simcomm
