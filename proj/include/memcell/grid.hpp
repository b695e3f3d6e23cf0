#pragma once
// Regular voxel grids of trilinear hexahedra on an axis-aligned box, shared
// by the cell and fine-domain solvers.  Node/element index layout is x-major
// with z fastest: idx = (ix*ny + iy)*nz + iz.

#include <cstdint>
#include <vector>

#include "core.hpp"

namespace memcell {

// Per-element reference data for the 8-node trilinear hex on [0,1]^3 with a
// 2x2x2 Gauss rule (exact for products of trilinears).  Shape gradients are
// with respect to reference coordinates; divide by the mesh step h for
// physical gradients.
struct ElemBasis {
  static constexpr int kNodes = 8;
  static constexpr int kGauss = 8;
  double N[kGauss][kNodes];      // shape values at Gauss points
  double dN[kGauss][kNodes][3];  // reference-coordinate gradients
  double gp[kGauss][3];          // Gauss point coordinates in [0,1]^3
  double w[kGauss];              // weights summing to 1 (reference volume)
  // reference-corner offsets, z fastest to match the node index layout
  static constexpr int off[kNodes][3] = {{0, 0, 0}, {0, 0, 1}, {0, 1, 0}, {0, 1, 1},
                                         {1, 0, 0}, {1, 0, 1}, {1, 1, 0}, {1, 1, 1}};

  static const ElemBasis& get() {
    static const ElemBasis b = make();
    return b;
  }

 private:
  static ElemBasis make() {
    ElemBasis b{};
    const double g0 = 0.5 - 0.5 / std::sqrt(3.0), g1 = 0.5 + 0.5 / std::sqrt(3.0);
    const double pts[2] = {g0, g1};
    int q = 0;
    for (int a = 0; a < 2; ++a)
      for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d, ++q) {
          b.gp[q][0] = pts[a];
          b.gp[q][1] = pts[c];
          b.gp[q][2] = pts[d];
          b.w[q] = 0.125;
        }
    for (q = 0; q < kGauss; ++q) {
      double x = b.gp[q][0], y = b.gp[q][1], z = b.gp[q][2];
      for (int n = 0; n < kNodes; ++n) {
        double fx = off[n][0] ? x : 1 - x, dfx = off[n][0] ? 1.0 : -1.0;
        double fy = off[n][1] ? y : 1 - y, dfy = off[n][1] ? 1.0 : -1.0;
        double fz = off[n][2] ? z : 1 - z, dfz = off[n][2] ? 1.0 : -1.0;
        b.N[q][n] = fx * fy * fz;
        b.dN[q][n][0] = dfx * fy * fz;
        b.dN[q][n][1] = fx * dfy * fz;
        b.dN[q][n][2] = fx * fy * dfz;
      }
    }
    return b;
  }
};

// nx*ny*nz voxels on a box of extent L (so h = L/nx etc. must agree; we keep
// cubes only: nx==ny==nz).  periodic=true identifies opposite faces, giving
// n^3 distinct nodes; otherwise nodes are the full (n+1)^3 lattice.
struct ElementMesh {
  int nx = 0, ny = 0, nz = 0;
  double h = 0;
  bool periodic = false;

  std::int64_t num_elems() const { return (std::int64_t)nx * ny * nz; }
  int nnx() const { return periodic ? nx : nx + 1; }
  int nny() const { return periodic ? ny : ny + 1; }
  int nnz() const { return periodic ? nz : nz + 1; }
  std::int64_t num_nodes() const { return (std::int64_t)nnx() * nny() * nnz(); }

  std::int64_t elem_index(int ix, int iy, int iz) const {
    return ((std::int64_t)ix * ny + iy) * nz + iz;
  }
  void elem_coords(std::int64_t e, int& ix, int& iy, int& iz) const {
    iz = int(e % nz);
    iy = int((e / nz) % ny);
    ix = int(e / ((std::int64_t)ny * nz));
  }
  std::int64_t node_index(int ix, int iy, int iz) const {
    if (periodic) {
      ix = (ix % nx + nx) % nx;
      iy = (iy % ny + ny) % ny;
      iz = (iz % nz + nz) % nz;
    }
    return ((std::int64_t)ix * nny() + iy) * nnz() + iz;
  }
  void node_coords(std::int64_t n, int& ix, int& iy, int& iz) const {
    iz = int(n % nnz());
    iy = int((n / nnz()) % nny());
    ix = int(n / ((std::int64_t)nny() * nnz()));
  }
  // nodes of element (ix,iy,iz), ordered like ElemBasis::off
  void elem_nodes(int ix, int iy, int iz, std::int64_t out[8]) const {
    for (int n = 0; n < 8; ++n)
      out[n] = node_index(ix + ElemBasis::off[n][0], iy + ElemBasis::off[n][1],
                          iz + ElemBasis::off[n][2]);
  }
};

// conflict-free scatter: the 8 parity classes (ix%2, iy%2, iz%2) of elements
// never share a node within a class, so each class may be scattered by many
// threads without atomics.
template <class F>
void for_elements_colored(const ElementMesh& mesh, F&& body /* body(e, ix, iy, iz) */) {
  for (int color = 0; color < 8; ++color) {
    int px = color & 1, py = (color >> 1) & 1, pz = (color >> 2) & 1;
    int cx = (mesh.nx - px + 1) / 2, cy = (mesh.ny - py + 1) / 2, cz = (mesh.nz - pz + 1) / 2;
    std::int64_t n = (std::int64_t)cx * cy * cz;
    parallel_for(n, [&](std::int64_t q) {
      int iz = pz + 2 * int(q % cz);
      int iy = py + 2 * int((q / cz) % cy);
      int ix = px + 2 * int(q / ((std::int64_t)cy * cz));
      body(mesh.elem_index(ix, iy, iz), ix, iy, iz);
    });
  }
}

}  // namespace memcell
