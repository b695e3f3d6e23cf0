#pragma once
// Matrix-free Q1 voxel finite elements: vector elasticity on the periodic
// matrix phase, the constrained scalar forms on the inclusion (the space of
// fields parallel to the oscillating field), and a Jacobi-preconditioned CG.

#include <array>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "core.hpp"
#include "grid.hpp"
#include "unitcell.hpp"

namespace memcell {

// 24x24 element stiffness of int A e(u):e(v) over a voxel of side h; dof
// order node-major (node, component).
std::array<double, 576> elasticity_element_matrix(const ElasticTensor& A, double h);

// 8x8 scalar stiffness of int (Ahat grad s)·grad s' over a voxel of side h.
std::array<double, 64> scalar_element_stiffness(const Mat3& Ahat, double h);

inline void gather_vec(const double* u, const std::int64_t nodes[8], double* loc24) {
  for (int a = 0; a < 8; ++a)
    for (int c = 0; c < 3; ++c) loc24[3 * a + c] = u[3 * nodes[a] + c];
}

// strain of the trilinear vector interpolant at Gauss point g.  Nodal values
// are taken relative to corner 0 so a constant field has exactly zero strain
// (the shape-derivative sums do not cancel exactly in floating point).
inline Mandel6 strain_at(const double* loc24, int g, double h) {
  const ElemBasis& B = ElemBasis::get();
  Mat3 grad{};  // grad[i][j] = d u_i / d y_j
  for (int a = 1; a < 8; ++a)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        grad[i][j] += (loc24[3 * a + i] - loc24[i]) * B.dN[g][a][j] / h;
  Mat3 e;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) e[i][j] = 0.5 * (grad[i][j] + grad[j][i]);
  return to_mandel(e);
}

inline Vec3 value_at(const double* loc24, int g) {
  const ElemBasis& B = ElemBasis::get();
  Vec3 v;
  for (int a = 0; a < 8; ++a)
    for (int c = 0; c < 3; ++c) v[c] += loc24[3 * a + c] * B.N[g][a];
  return v;
}

//--------------------------------------------------------------------------
// Periodic vector elasticity on the matrix phase Y1.  Vectors are nodal
// (3 * num periodic nodes); entries at nodes not touching a hard voxel stay
// zero.  Kernel on the active set: per-component constants (translations).
//--------------------------------------------------------------------------

class PeriodicElasticity {
 public:
  PeriodicElasticity(const ElasticTensor& A1, const CellGeometry& geom);

  std::int64_t vec_len() const { return 3 * geom_->mesh.num_nodes(); }
  void apply(const double* u, double* out) const;
  const std::vector<double>& diagonal() const { return diag_; }
  // subtract the active-node mean per component (translation projector)
  void project_translations(double* u) const;
  std::int64_t active_nodes() const { return nactive_; }
  const CellGeometry& geom() const { return *geom_; }
  const ElasticTensor& tensor() const { return A_; }
  const std::array<double, 576>& element_matrix() const { return ke_; }

  // load for the cell problems: rhs[v] = -int_{Y1} A (E_jk + 0) : e(v)  with
  // E as a constant symmetric matrix (strain-basis load)
  std::vector<double> load_strain_basis(const Mat3& E) const;
  // load rhs[v] = -int_{Y1} (b x e_j) · v   with b the nodal field
  std::vector<double> load_cross(const std::vector<double>& b_nodal, int j) const;

 private:
  const CellGeometry* geom_;
  ElasticTensor A_;
  std::array<double, 576> ke_;
  std::vector<double> diag_;
  std::vector<std::uint8_t> active_;
  std::int64_t nactive_ = 0;
};

//--------------------------------------------------------------------------
// Constrained forms on the inclusion: scalar unknowns s at interior nodes
// (Dirichlet on the interface), embedded as the vector field s·bhat.
//   S(s,s') = int_{Y2} A2 e(s bhat) : e(s' bhat)
//   M(s,s') = int_{Y2} s s' |bhat|^2
//--------------------------------------------------------------------------

class ConstrainedForms {
 public:
  ConstrainedForms(const ElasticTensor& A2, const SampledField& field, const CellGeometry& geom);

  std::int64_t ndof() const { return (std::int64_t)dof_nodes_.size(); }
  void applyS(const double* s, double* out) const;
  void applyM(const double* s, double* out) const;
  const std::vector<double>& diagS() const { return diagS_; }
  const std::vector<double>& diagM() const { return diagM_; }

  Vec3 integral_s_bhat(const double* s) const;  // int_{Y2} s bhat dy
  double coupling_c(const double* s) const;     // int_{Y2} A2 e(s bhat):e(bhat) dy
  double int_bhat2() const { return int_bhat2_; }
  Vec3 int_bhat() const { return int_bhat_; }
  double cstar() const { return cstar_; }  // int_{Y2} A2 e(bhat):e(bhat) dy
  // int_{Y2} (I - n (x) n) dy with n the unit direction of b
  const Mat3& proj2() const { return proj2_; }
  const std::vector<std::int64_t>& dof_nodes() const { return dof_nodes_; }
  const CellGeometry& geom() const { return *geom_; }

  // quadrature load vector: rhs_a = int_{Y2} f N_a for scalar f(y)
  std::vector<double> load_scalar(const std::function<double(Vec3)>& f) const;
  // mean-square of the difference between the nodal solution and g(y) over Y2
  double l2_error(const double* s, const std::function<double(Vec3)>& g) const;

 private:
  struct ElemData {
    std::int32_t dof[8];     // compact dof id per element node, -1 = Dirichlet
    double Se[64], Me[64];   // element stiffness / weighted mass
    double q[8][3];          // node -> contribution to int s bhat
    double c[8];             // node -> contribution to int A2 e(s bhat):e(bhat)
  };
  const CellGeometry* geom_;
  std::vector<std::int64_t> dof_nodes_;
  std::vector<ElemData> elems_;
  std::vector<double> diagS_, diagM_;
  double int_bhat2_ = 0, cstar_ = 0;
  Vec3 int_bhat_{0, 0, 0};
  Mat3 proj2_{};
};

//--------------------------------------------------------------------------
// Conjugate gradients with optional Jacobi preconditioner and null-space
// projection; deterministic reductions throughout.
//--------------------------------------------------------------------------

struct CgResult {
  int iters = 0;
  double rel_residual = 0;
};

struct CgOptions {
  double tol = 1e-10;
  int maxiter = 20000;
};

template <class Apply, class Project>
CgResult cg_solve(Apply&& A, const std::vector<double>& rhs, std::vector<double>& x,
                  const std::vector<double>& diag, Project&& project, CgOptions opt = {}) {
  std::int64_t n = (std::int64_t)rhs.size();
  x.assign((std::size_t)n, 0.0);
  std::vector<double> r = rhs;
  project(r.data());
  double bnorm = std::sqrt(chunked_dot(r.data(), r.data(), n));
  if (bnorm == 0.0) return {0, 0.0};

  auto precond = [&](const double* rr, double* zz) {
    if (diag.empty()) {
      for (std::int64_t i = 0; i < n; ++i) zz[i] = rr[i];
    } else {
      parallel_for(n, [&](std::int64_t i) { zz[i] = diag[i] > 0 ? rr[i] / diag[i] : 0.0; });
    }
  };

  std::vector<double> z((std::size_t)n), p((std::size_t)n), q((std::size_t)n);
  precond(r.data(), z.data());
  p = z;
  double rz = chunked_dot(r.data(), z.data(), n);
  for (int it = 1; it <= opt.maxiter; ++it) {
    A(p.data(), q.data());
    project(q.data());
    double pq = chunked_dot(p.data(), q.data(), n);
    if (pq <= 0) throw std::runtime_error("cg: operator not positive definite on the search space");
    double alpha = rz / pq;
    parallel_for(n, [&](std::int64_t i) { x[i] += alpha * p[i]; });
    parallel_for(n, [&](std::int64_t i) { r[i] -= alpha * q[i]; });
    project(r.data());
    double rnorm = std::sqrt(chunked_dot(r.data(), r.data(), n));
    if (rnorm <= opt.tol * bnorm) return {it, rnorm / bnorm};
    precond(r.data(), z.data());
    double rz_new = chunked_dot(r.data(), z.data(), n);
    double beta = rz_new / rz;
    rz = rz_new;
    parallel_for(n, [&](std::int64_t i) { p[i] = z[i] + beta * p[i]; });
  }
  double rnorm = std::sqrt(chunked_dot(r.data(), r.data(), n));
  throw std::runtime_error("cg: no convergence in " + std::to_string(opt.maxiter) +
                           " iterations, relative residual " + std::to_string(rnorm / bnorm));
}

inline auto no_projection() {
  return [](double*) {};
}

}  // namespace memcell
