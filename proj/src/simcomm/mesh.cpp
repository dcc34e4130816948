// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#include "simcomm/mesh.hpp"

namespace uspsim::simcomm {

ProcessMesh::ProcessMesh(int ulysses_degree, int ring_degree)
    : ulysses_(ulysses_degree), ring_(ring_degree) {
  if (ulysses_ < 1 || ring_ < 1) {
    throw_invalid("mesh degrees must be >= 1");
  }
}

void ProcessMesh::check_rank(int rank) const {
  if (rank < 0 || rank >= world_size()) {
    std::ostringstream os;
    os << "rank " << rank << " outside mesh of size " << world_size();
    throw_invalid(os.str());
  }
}

int ProcessMesh::ulysses_coord(int rank) const {
  check_rank(rank);
  return rank % ulysses_;
}

int ProcessMesh::ring_coord(int rank) const {
  check_rank(rank);
  return rank / ulysses_;
}

int ProcessMesh::rank_of(int ulysses_coord, int ring_coord) const {
  if (ulysses_coord < 0 || ulysses_coord >= ulysses_ || ring_coord < 0 ||
      ring_coord >= ring_) {
    throw_invalid("mesh coordinates out of range");
  }
  return ring_coord * ulysses_ + ulysses_coord;
}

ProcessGroup ProcessMesh::ulysses_group(int rank) const {
  const int r = ring_coord(rank);
  std::vector<int> members(static_cast<size_t>(ulysses_));
  for (int u = 0; u < ulysses_; ++u) {
    members[static_cast<size_t>(u)] = rank_of(u, r);
  }
  return ProcessGroup(members);
}

ProcessGroup ProcessMesh::ring_group(int rank) const {
  const int u = ulysses_coord(rank);
  std::vector<int> members(static_cast<size_t>(ring_));
  for (int r = 0; r < ring_; ++r) {
    members[static_cast<size_t>(r)] = rank_of(u, r);
  }
  return ProcessGroup(members);
}

}  // namespace uspsim::simcomm
