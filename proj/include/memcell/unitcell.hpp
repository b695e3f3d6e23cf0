#pragma once
// Unit-cell geometry (voxelized two-phase cell, soft inclusion strictly
// inside) and oscillating-field sampling, including the direction field
// bhat = (b (x) b / |b|^2) xi and interface direction-rank detection.

#include <cstdint>
#include <vector>

#include "core.hpp"
#include "expr.hpp"
#include "grid.hpp"

namespace memcell {

enum class Shape { none, cube, ball };

struct InclusionSpec {
  Shape shape = Shape::none;
  Vec3 center{0.5, 0.5, 0.5};
  double size = 0;  // cube: side length; ball: radius
};

struct CellGeometry {
  ElementMesh mesh;  // periodic voxel mesh of the cell (0,1)^3
  InclusionSpec spec;
  std::vector<std::uint8_t> soft;  // per voxel: 1 = inclusion phase, 0 = matrix
  std::vector<std::int64_t> soft_elems;
  std::vector<std::int64_t> hard_elems;
  // per periodic node: all 8 adjacent voxels soft (carries the Dirichlet
  // scalar unknowns), resp. adjacent to at least one hard voxel
  std::vector<std::uint8_t> node_interior2;
  std::vector<std::uint8_t> node_in_hard;
  double vol1 = 0, vol2 = 0;

  bool soft_at(int ix, int iy, int iz) const { return soft[mesh.elem_index(ix, iy, iz)] != 0; }
};

// n voxels per side; throws on: n < 8, inclusion touching the cell boundary
// (needs one full voxel of margin), empty voxelization, disconnected matrix.
CellGeometry build_geometry(const InclusionSpec& spec, int n);

struct FieldSpec {
  bool fixed_direction = false;
  Vec3 xi{0, 0, 1};  // unit vector (fixed_direction only)
  Expr gamma;        // scalar amplitude (fixed_direction only)
  bool support_inclusion = false;  // clamp amplitude to 0 off the inclusion interior
  VecExpr comp;                    // general three-component field
};

struct SampledField {
  // node-major interleaved triples (bx, by, bz) on the periodic node set
  std::vector<double> b;
  // direction field (bhat) triples; meaningful on nodes of soft elements.
  // rank 1: (b (x) b / |b|^2) xi.  rank >= 2: the unit direction b / |b|,
  // which parametrizes the pointwise-parallel constraint space.
  std::vector<double> bhat;
  Vec3 xi{0, 0, 0};  // detected (rank 1) or prescribed direction
  int rank = 0;      // span of b over interface voxels
  bool fixed_direction = false;
  double bmax = 0;  // max nodal |b|
  Vec3 node_b(std::int64_t n) const { return {b[3 * n], b[3 * n + 1], b[3 * n + 2]}; }
  Vec3 node_bhat(std::int64_t n) const { return {bhat[3 * n], bhat[3 * n + 1], bhat[3 * n + 2]}; }
};

// Samples b at periodic nodes, checks the matrix-phase compatibility
// integral and the nonvanishing condition on the inclusion, computes the
// interface direction rank and bhat.  Throws std::runtime_error on any
// violated admissibility condition.
SampledField sample_field(const FieldSpec& spec, const CellGeometry& geom);

// Rank of span{b} over interface voxels (soft voxels with a hard face
// neighbor); singular value ratio tolerance 1e-6.  Throws if the interface
// is empty or b vanishes on all of it.
int boundary_direction_rank(const FieldSpec& spec, const CellGeometry& geom);

}  // namespace memcell
