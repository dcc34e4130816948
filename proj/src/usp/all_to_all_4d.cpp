// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include "usp/all_to_all_4d.hpp"

#include <sstream>

namespace uspsim::usp {

namespace {

template <class T>
numerics::Tensor4<T> scatter_heads_gather_seq(simcomm::RankCtx& ctx,
                                              const simcomm::ProcessGroup& g,
                                              const numerics::Tensor4<T>& in) {
  const int n = g.size();
  if (in.heads() % n != 0) {
    std::ostringstream os;
    os << "head count " << in.heads() << " is not divisible by group size "
       << n << "; the ulysses degree cannot exceed the head count";
    throw_constraint(os.str());
  }
  const int64_t local_heads = in.heads() / n;
  const int64_t part_elems =
      in.batch() * in.seq() * local_heads * in.head_size();

  std::vector<std::vector<T>> parts(static_cast<size_t>(n));
  for (int peer = 0; peer < n; ++peer) {
    auto& part = parts[static_cast<size_t>(peer)];
    part.reserve(static_cast<size_t>(part_elems));
    for (int64_t b = 0; b < in.batch(); ++b) {
      for (int64_t t = 0; t < in.seq(); ++t) {
        for (int64_t h = 0; h < local_heads; ++h) {
          const auto row = in.row(b, t, peer * local_heads + h);
          part.insert(part.end(), row.begin(), row.end());
        }
      }
    }
  }
  auto recv = ctx.all_to_all<T>(g, std::move(parts));

  numerics::Tensor4<T> out(in.batch(), in.seq() * n, local_heads,
                           in.head_size());
  for (int src = 0; src < n; ++src) {
    const auto& part = recv[static_cast<size_t>(src)];
    size_t cursor = 0;
    for (int64_t b = 0; b < in.batch(); ++b) {
      for (int64_t t = 0; t < in.seq(); ++t) {
        for (int64_t h = 0; h < local_heads; ++h) {
          auto row = out.row(b, src * in.seq() + t, h);
          std::copy(part.begin() + cursor,
                    part.begin() + cursor + row.size(), row.begin());
          cursor += row.size();
        }
      }
    }
  }
  return out;
}

template <class T>
numerics::Tensor4<T> scatter_seq_gather_heads(simcomm::RankCtx& ctx,
                                              const simcomm::ProcessGroup& g,
                                              const numerics::Tensor4<T>& in) {
  const int n = g.size();
  if (in.seq() % n != 0) {
    throw_constraint(
        "sequence length is not divisible by the group size; input is not "
        "gather-sharded over this group");
  }
  const int64_t local_seq = in.seq() / n;
  const int64_t part_elems =
      in.batch() * local_seq * in.heads() * in.head_size();

  std::vector<std::vector<T>> parts(static_cast<size_t>(n));
  for (int peer = 0; peer < n; ++peer) {
    auto& part = parts[static_cast<size_t>(peer)];
    part.reserve(static_cast<size_t>(part_elems));
    for (int64_t b = 0; b < in.batch(); ++b) {
      for (int64_t t = 0; t < local_seq; ++t) {
        for (int64_t h = 0; h < in.heads(); ++h) {
          const auto row = in.row(b, peer * local_seq + t, h);
          part.insert(part.end(), row.begin(), row.end());
        }
      }
    }
  }
  auto recv = ctx.all_to_all<T>(g, std::move(parts));

  numerics::Tensor4<T> out(in.batch(), local_seq, in.heads() * n,
                           in.head_size());
  for (int src = 0; src < n; ++src) {
    const auto& part = recv[static_cast<size_t>(src)];
    size_t cursor = 0;
    for (int64_t b = 0; b < in.batch(); ++b) {
      for (int64_t t = 0; t < local_seq; ++t) {
        for (int64_t h = 0; h < in.heads(); ++h) {
          auto row = out.row(b, t, src * in.heads() + h);
          std::copy(part.begin() + cursor,
                    part.begin() + cursor + row.size(), row.begin());
          cursor += row.size();
        }
      }
    }
  }
  return out;
}

}  // namespace

template <class T>
numerics::Tensor4<T> all_to_all_4d(simcomm::RankCtx& ctx,
                                   const simcomm::ProcessGroup& group,
                                   const numerics::Tensor4<T>& in,
                                   int scatter_idx, int gather_idx) {
  if (scatter_idx == 2 && gather_idx == 1) {
    return scatter_heads_gather_seq(ctx, group, in);
  }
  if (scatter_idx == 1 && gather_idx == 2) {
    return scatter_seq_gather_heads(ctx, group, in);
  }
  std::ostringstream os;
  os << "unsupported scatter/gather axes (" << scatter_idx << ", "
     << gather_idx << "); only the sequence<->head swap is defined";
  throw_invalid(os.str());
}

std::vector<int64_t> gather_positions(simcomm::RankCtx& ctx,
                                      const simcomm::ProcessGroup& group,
                                      std::span<const int64_t> positions) {
  return ctx.all_gather<int64_t>(group, positions);
}

std::vector<int64_t> split_positions(const simcomm::ProcessGroup& group,
                                     int global_rank,
                                     std::span<const int64_t> positions) {
  const int n = group.size();
  if (positions.size() % static_cast<size_t>(n) != 0) {
    throw_invalid("positions length is not divisible by the group size");
  }
  const size_t chunk = positions.size() / static_cast<size_t>(n);
  const size_t from = static_cast<size_t>(group.local_index(global_rank)) * chunk;
  return std::vector<int64_t>(positions.begin() + from,
                              positions.begin() + from + chunk);
}

template numerics::Tensor4<float> all_to_all_4d(simcomm::RankCtx&, const simcomm::ProcessGroup&, const numerics::Tensor4<float>&, int, int);
template numerics::Tensor4<double> all_to_all_4d(simcomm::RankCtx&, const simcomm::ProcessGroup&, const numerics::Tensor4<double>&, int, int);

}  // namespace uspsim::usp
