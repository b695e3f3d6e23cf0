#include "memcell/unitcell.hpp"

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>

namespace memcell {

namespace {

bool point_inside(const InclusionSpec& s, Vec3 y) {
  switch (s.shape) {
    case Shape::none:
      return false;
    case Shape::cube:
      return std::fabs(y[0] - s.center[0]) < 0.5 * s.size &&
             std::fabs(y[1] - s.center[1]) < 0.5 * s.size &&
             std::fabs(y[2] - s.center[2]) < 0.5 * s.size;
    case Shape::ball:
      return norm(y - s.center) < s.size;
  }
  return false;
}

// analytic bounding box of the inclusion
void bounds(const InclusionSpec& s, double lo[3], double hi[3]) {
  double r = (s.shape == Shape::cube) ? 0.5 * s.size : s.size;
  for (int d = 0; d < 3; ++d) {
    lo[d] = s.center[d] - r;
    hi[d] = s.center[d] + r;
  }
}

}  // namespace

CellGeometry build_geometry(const InclusionSpec& spec, int n) {
  if (n < 8) throw std::runtime_error("cell resolution too small: n=" + std::to_string(n) + " < 8");
  if (spec.shape != Shape::none) {
    if (spec.size <= 0) throw std::runtime_error("inclusion size must be positive");
    double lo[3], hi[3], h = 1.0 / n;
    bounds(spec, lo, hi);
    for (int d = 0; d < 3; ++d)
      if (lo[d] < h || hi[d] > 1.0 - h)
        throw std::runtime_error(
            "inclusion touches the cell boundary (needs one voxel of margin): axis " +
            std::to_string(d + 1) + " extent [" + std::to_string(lo[d]) + "," +
            std::to_string(hi[d]) + "]");
  }

  CellGeometry g;
  g.mesh = ElementMesh{n, n, n, 1.0 / n, true};
  g.spec = spec;
  g.soft.assign((std::size_t)g.mesh.num_elems(), 0);

  std::int64_t nsoft = 0;
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy)
      for (int iz = 0; iz < n; ++iz) {
        Vec3 c{(ix + 0.5) / n, (iy + 0.5) / n, (iz + 0.5) / n};
        if (point_inside(spec, c)) {
          g.soft[(std::size_t)g.mesh.elem_index(ix, iy, iz)] = 1;
          ++nsoft;
        }
      }
  if (spec.shape != Shape::none && nsoft == 0)
    throw std::runtime_error("inclusion resolves to zero voxels at n=" + std::to_string(n));

  std::int64_t ne = g.mesh.num_elems();
  g.soft_elems.reserve((std::size_t)nsoft);
  g.hard_elems.reserve((std::size_t)(ne - nsoft));
  for (std::int64_t e = 0; e < ne; ++e)
    (g.soft[(std::size_t)e] ? g.soft_elems : g.hard_elems).push_back(e);
  g.vol2 = (double)nsoft / (double)ne;
  g.vol1 = (double)(ne - nsoft) / (double)ne;

  // matrix phase must be face-connected (periodic adjacency)
  if (!g.hard_elems.empty()) {
    std::vector<std::uint8_t> seen((std::size_t)ne, 0);
    std::deque<std::int64_t> q;
    q.push_back(g.hard_elems[0]);
    seen[(std::size_t)g.hard_elems[0]] = 1;
    std::int64_t reached = 0;
    while (!q.empty()) {
      std::int64_t e = q.front();
      q.pop_front();
      ++reached;
      int ix, iy, iz;
      g.mesh.elem_coords(e, ix, iy, iz);
      const int d6[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
      for (auto& d : d6) {
        int jx = (ix + d[0] + n) % n, jy = (iy + d[1] + n) % n, jz = (iz + d[2] + n) % n;
        std::int64_t f = g.mesh.elem_index(jx, jy, jz);
        if (!g.soft[(std::size_t)f] && !seen[(std::size_t)f]) {
          seen[(std::size_t)f] = 1;
          q.push_back(f);
        }
      }
    }
    if (reached != (std::int64_t)g.hard_elems.size())
      throw std::runtime_error("matrix phase is disconnected");
  }

  // node classification
  std::int64_t nn = g.mesh.num_nodes();
  g.node_interior2.assign((std::size_t)nn, 0);
  g.node_in_hard.assign((std::size_t)nn, 0);
  for (std::int64_t node = 0; node < nn; ++node) {
    int ix, iy, iz;
    g.mesh.node_coords(node, ix, iy, iz);
    bool all_soft = true, any_hard = false;
    for (int a = -1; a <= 0; ++a)
      for (int b = -1; b <= 0; ++b)
        for (int c = -1; c <= 0; ++c) {
          int jx = (ix + a + n) % n, jy = (iy + b + n) % n, jz = (iz + c + n) % n;
          if (g.soft[(std::size_t)g.mesh.elem_index(jx, jy, jz)])
            ;
          else {
            all_soft = false;
            any_hard = true;
          }
        }
    g.node_interior2[(std::size_t)node] = all_soft ? 1 : 0;
    g.node_in_hard[(std::size_t)node] = any_hard ? 1 : 0;
  }
  return g;
}

namespace {

// nodal samples of b on the periodic node lattice
std::vector<double> eval_nodal_b(const FieldSpec& spec, const CellGeometry& geom) {
  const ElementMesh& mesh = geom.mesh;
  std::int64_t nn = mesh.num_nodes();
  std::vector<double> b(3 * (std::size_t)nn, 0.0);
  if (spec.fixed_direction) {
    double nx = norm(spec.xi);
    if (std::fabs(nx - 1.0) > 1e-12)
      throw std::runtime_error("field direction must be a unit vector, |xi|=" + std::to_string(nx));
  }
  for (std::int64_t node = 0; node < nn; ++node) {
    int ix, iy, iz;
    mesh.node_coords(node, ix, iy, iz);
    Vec3 y{(double)ix * mesh.h, (double)iy * mesh.h, (double)iz * mesh.h};
    Vec3 val;
    if (spec.fixed_direction) {
      double g = spec.gamma.eval(y, 0.0);
      if (spec.support_inclusion && !geom.node_interior2[(std::size_t)node]) g = 0.0;
      val = g * spec.xi;
    } else {
      val = spec.comp.eval(y, 0.0);
      if (spec.support_inclusion && !geom.node_interior2[(std::size_t)node]) val = {0, 0, 0};
    }
    b[3 * (std::size_t)node + 0] = val[0];
    b[3 * (std::size_t)node + 1] = val[1];
    b[3 * (std::size_t)node + 2] = val[2];
  }
  return b;
}

// rank of the sample span over interface voxels via the 3x3 Gram matrix;
// fills the dominant direction when rank is 1
int interface_rank(const std::vector<double>& b, const CellGeometry& geom, Vec3* dir,
                   double bmax_global) {
  const ElementMesh& mesh = geom.mesh;
  int n = mesh.nx;
  double G[9] = {0};
  std::int64_t interface_voxels = 0;
  for (std::int64_t e : geom.soft_elems) {
    int ix, iy, iz;
    mesh.elem_coords(e, ix, iy, iz);
    const int d6[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    bool iface = false;
    for (auto& d : d6) {
      int jx = (ix + d[0] + n) % n, jy = (iy + d[1] + n) % n, jz = (iz + d[2] + n) % n;
      if (!geom.soft[(std::size_t)mesh.elem_index(jx, jy, jz)]) {
        iface = true;
        break;
      }
    }
    if (!iface) continue;
    ++interface_voxels;
    std::int64_t nodes[8];
    mesh.elem_nodes(ix, iy, iz, nodes);
    for (int a = 0; a < 8; ++a) {
      const double* bb = &b[3 * (std::size_t)nodes[a]];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) G[3 * i + j] += bb[i] * bb[j];
    }
  }
  if (interface_voxels == 0) throw std::runtime_error("inclusion has no interface voxels");
  double eig[3], V[9], A[9];
  for (int i = 0; i < 9; ++i) A[i] = G[i];
  jacobi_eig(3, A, eig, V);
  // singular values of the sample matrix are sqrt of Gram eigenvalues
  double sv[3] = {std::sqrt(std::fmax(eig[2], 0.0)), std::sqrt(std::fmax(eig[1], 0.0)),
                  std::sqrt(std::fmax(eig[0], 0.0))};
  if (sv[0] <= 1e-14 * bmax_global || bmax_global == 0)
    throw std::runtime_error("field vanishes on the inclusion interface");
  int rank = 1;
  for (int i = 1; i < 3; ++i)
    if (sv[i] > 1e-6 * sv[0]) ++rank;
  if (dir && rank == 1) {
    Vec3 v{V[0 * 3 + 2], V[1 * 3 + 2], V[2 * 3 + 2]};  // eigenvector of largest eigenvalue
    double nv = norm(v);
    v = (1.0 / nv) * v;
    // deterministic sign: largest-magnitude component positive
    int arg = 0;
    for (int i = 1; i < 3; ++i)
      if (std::fabs(v[i]) > std::fabs(v[arg])) arg = i;
    if (v[arg] < 0) v = -1.0 * v;
    *dir = v;
  }
  return rank;
}

}  // namespace

SampledField sample_field(const FieldSpec& spec, const CellGeometry& geom) {
  const ElementMesh& mesh = geom.mesh;
  std::int64_t nn = mesh.num_nodes();
  SampledField out;
  out.b = eval_nodal_b(spec, geom);
  for (std::int64_t i = 0; i < nn; ++i) {
    double m = norm(out.node_b(i));
    if (m > out.bmax) out.bmax = m;
  }

  // compatibility: integral of b over the matrix phase must vanish.  The
  // trilinear interpolant integrates to h^3 * (mean of corner values) per
  // voxel, so the check is exact for the discrete field.
  {
    double acc[3] = {0, 0, 0};
    for (std::int64_t e : geom.hard_elems) {
      int ix, iy, iz;
      mesh.elem_coords(e, ix, iy, iz);
      std::int64_t nodes[8];
      mesh.elem_nodes(ix, iy, iz, nodes);
      for (int a = 0; a < 8; ++a)
        for (int c = 0; c < 3; ++c) acc[c] += out.b[3 * (std::size_t)nodes[a] + c];
    }
    double vox = mesh.h * mesh.h * mesh.h / 8.0;
    double mag = std::sqrt(acc[0] * acc[0] + acc[1] * acc[1] + acc[2] * acc[2]) * vox;
    double tol = 1e-10 * out.bmax * (geom.vol1 > 0 ? geom.vol1 : 1.0);
    if (out.bmax > 0 && mag > tol)
      throw std::runtime_error("field violates the matrix-phase compatibility integral: |int b| = " +
                               std::to_string(mag) + " > " + std::to_string(tol));
  }

  if (!geom.soft_elems.empty()) {
    // nonvanishing on the inclusion: a soft voxel is dead when b ~ 0 at all
    // of its corners; more than 1% dead voxels is a rejection
    std::int64_t dead = 0;
    for (std::int64_t e : geom.soft_elems) {
      int ix, iy, iz;
      mesh.elem_coords(e, ix, iy, iz);
      std::int64_t nodes[8];
      mesh.elem_nodes(ix, iy, iz, nodes);
      bool alive = false;
      for (int a = 0; a < 8 && !alive; ++a)
        if (norm(out.node_b(nodes[a])) > 1e-12 * out.bmax) alive = true;
      if (!alive) ++dead;
    }
    if (out.bmax == 0 || dead > (std::int64_t)(0.01 * (double)geom.soft_elems.size()))
      throw std::runtime_error("field vanishes on a non-negligible part of the inclusion (" +
                               std::to_string(dead) + " of " +
                               std::to_string(geom.soft_elems.size()) + " voxels)");

    Vec3 dir{0, 0, 0};
    out.rank = interface_rank(out.b, geom, &dir, out.bmax);
    out.xi = spec.fixed_direction ? spec.xi : dir;
    out.fixed_direction = spec.fixed_direction;

    // bhat = (b (x) b / |b|^2) xi on soft-element nodes; for a fixed
    // direction this is identically xi (scale-free in b); for general
    // fields it is evaluated nodally, with the limit value xi at isolated
    // zeros of b
    out.bhat.assign(3 * (std::size_t)nn, 0.0);
    std::vector<std::uint8_t> on_soft((std::size_t)nn, 0);
    for (std::int64_t e : geom.soft_elems) {
      int ix, iy, iz;
      mesh.elem_coords(e, ix, iy, iz);
      std::int64_t nodes[8];
      mesh.elem_nodes(ix, iy, iz, nodes);
      for (int a = 0; a < 8; ++a) on_soft[(std::size_t)nodes[a]] = 1;
    }
    if (out.rank >= 2) {
      // multi-directional interface: frozen-limit regime.  No macroscopic
      // direction exists, but the pointwise-parallel constraint space is
      // still parametrized by the unit direction of b.
      out.xi = {0, 0, 0};
      for (std::int64_t i = 0; i < nn; ++i) {
        if (!on_soft[(std::size_t)i]) continue;
        Vec3 bb = out.node_b(i);
        double m = norm(bb);
        if (m > 1e-12 * out.bmax) {
          Vec3 bh = (1.0 / m) * bb;
          out.bhat[3 * (std::size_t)i + 0] = bh[0];
          out.bhat[3 * (std::size_t)i + 1] = bh[1];
          out.bhat[3 * (std::size_t)i + 2] = bh[2];
        }
      }
    } else {
      for (std::int64_t i = 0; i < nn; ++i) {
        if (!on_soft[(std::size_t)i]) continue;
        Vec3 bh;
        if (spec.fixed_direction) {
          bh = out.xi;
        } else {
          Vec3 bb = out.node_b(i);
          double m2 = dot(bb, bb);
          bh = (m2 > 1e-24 * out.bmax * out.bmax) ? (dot(bb, out.xi) / m2) * bb : out.xi;
        }
        out.bhat[3 * (std::size_t)i + 0] = bh[0];
        out.bhat[3 * (std::size_t)i + 1] = bh[1];
        out.bhat[3 * (std::size_t)i + 2] = bh[2];
      }
    }
  }
  return out;
}

int boundary_direction_rank(const FieldSpec& spec, const CellGeometry& geom) {
  if (geom.soft_elems.empty()) throw std::runtime_error("no inclusion: interface rank undefined");
  std::vector<double> b = eval_nodal_b(spec, geom);
  double bmax = 0;
  for (std::size_t i = 0; i < b.size() / 3; ++i) {
    double m = std::sqrt(b[3 * i] * b[3 * i] + b[3 * i + 1] * b[3 * i + 1] +
                         b[3 * i + 2] * b[3 * i + 2]);
    if (m > bmax) bmax = m;
  }
  return interface_rank(b, geom, nullptr, bmax);
}

}  // namespace memcell
