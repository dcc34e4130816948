// Copyright (c) 2026, the uspsim authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "simcomm/world.hpp"

namespace uspsim::simcomm {

// 2D view of an SP process group: rank = ring_coord * U + ulysses_coord, so
// the Ulysses dimension is contiguous/innermost. Each row of the mesh (fixed
// ring coordinate) is one Ulysses group; each column (fixed ulysses
// coordinate) is one Ring group.
class ProcessMesh {
 public:
  ProcessMesh(int ulysses_degree, int ring_degree);

  int ulysses_degree() const { return ulysses_; }
  int ring_degree() const { return ring_; }
  int world_size() const { return ulysses_ * ring_; }

  int ulysses_coord(int rank) const;
  int ring_coord(int rank) const;
  int rank_of(int ulysses_coord, int ring_coord) const;

  ProcessGroup ulysses_group(int rank) const;
  ProcessGroup ring_group(int rank) const;

 private:
  void check_rank(int rank) const;

  int ulysses_;
  int ring_;
};

}  // namespace uspsim::simcomm
