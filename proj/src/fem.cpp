#include "memcell/fem.hpp"

#include <cmath>

namespace memcell {

std::array<double, 576> elasticity_element_matrix(const ElasticTensor& A, double h) {
  const ElemBasis& B = ElemBasis::get();
  std::array<double, 576> ke{};
  double vol = h * h * h;
  Vec3 ei[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int g = 0; g < ElemBasis::kGauss; ++g) {
    Mandel6 bm[24];
    for (int a = 0; a < 8; ++a) {
      Vec3 grad{B.dN[g][a][0] / h, B.dN[g][a][1] / h, B.dN[g][a][2] / h};
      for (int c = 0; c < 3; ++c) bm[3 * a + c] = to_mandel(sym_dyad(ei[c], grad));
    }
    Mandel6 cb[24];
    for (int i = 0; i < 24; ++i) cb[i] = A.apply(bm[i]);
    for (int i = 0; i < 24; ++i)
      for (int j = 0; j < 24; ++j) {
        double s = 0;
        for (int k = 0; k < 6; ++k) s += bm[i][k] * cb[j][k];
        ke[(std::size_t)(24 * i + j)] += B.w[g] * vol * s;
      }
  }
  return ke;
}

std::array<double, 64> scalar_element_stiffness(const Mat3& Ahat, double h) {
  const ElemBasis& B = ElemBasis::get();
  std::array<double, 64> ke{};
  double vol = h * h * h;
  for (int g = 0; g < ElemBasis::kGauss; ++g) {
    Vec3 grad[8];
    for (int a = 0; a < 8; ++a)
      grad[a] = {B.dN[g][a][0] / h, B.dN[g][a][1] / h, B.dN[g][a][2] / h};
    for (int a = 0; a < 8; ++a) {
      Vec3 Ag = Ahat * grad[a];
      for (int b = 0; b < 8; ++b) ke[(std::size_t)(8 * a + b)] += B.w[g] * vol * dot(Ag, grad[b]);
    }
  }
  return ke;
}

//--------------------------------------------------------------------------
// PeriodicElasticity
//--------------------------------------------------------------------------

PeriodicElasticity::PeriodicElasticity(const ElasticTensor& A1, const CellGeometry& geom)
    : geom_(&geom), A_(A1), ke_(elasticity_element_matrix(A1, geom.mesh.h)) {
  std::int64_t nn = geom.mesh.num_nodes();
  active_.assign((std::size_t)nn, 0);
  diag_.assign((std::size_t)(3 * nn), 0.0);
  for (std::int64_t e : geom.hard_elems) {
    int ix, iy, iz;
    geom.mesh.elem_coords(e, ix, iy, iz);
    std::int64_t nodes[8];
    geom.mesh.elem_nodes(ix, iy, iz, nodes);
    for (int a = 0; a < 8; ++a) {
      active_[(std::size_t)nodes[a]] = 1;
      for (int c = 0; c < 3; ++c)
        diag_[(std::size_t)(3 * nodes[a] + c)] += ke_[(std::size_t)(24 * (3 * a + c) + 3 * a + c)];
    }
  }
  for (std::int64_t i = 0; i < nn; ++i) nactive_ += active_[(std::size_t)i];
  if (nactive_ == 0) throw std::runtime_error("matrix phase has no elements");
}

void PeriodicElasticity::apply(const double* u, double* out) const {
  const ElementMesh& mesh = geom_->mesh;
  std::int64_t nn = mesh.num_nodes();
  parallel_for(3 * nn, [&](std::int64_t i) { out[i] = 0.0; });
  for_elements_colored(mesh, [&](std::int64_t e, int ix, int iy, int iz) {
    if (geom_->soft[(std::size_t)e]) return;
    std::int64_t nodes[8];
    mesh.elem_nodes(ix, iy, iz, nodes);
    double loc[24], res[24];
    gather_vec(u, nodes, loc);
    for (int i = 0; i < 24; ++i) {
      double s = 0;
      const double* row = &ke_[(std::size_t)(24 * i)];
      for (int j = 0; j < 24; ++j) s += row[j] * loc[j];
      res[i] = s;
    }
    for (int a = 0; a < 8; ++a)
      for (int c = 0; c < 3; ++c) out[3 * nodes[a] + c] += res[3 * a + c];
  });
}

void PeriodicElasticity::project_translations(double* u) const {
  std::int64_t nn = geom_->mesh.num_nodes();
  for (int c = 0; c < 3; ++c) {
    double s = 0;
    for (std::int64_t i = 0; i < nn; ++i)
      if (active_[(std::size_t)i]) s += u[3 * i + c];
    double mean = s / (double)nactive_;
    for (std::int64_t i = 0; i < nn; ++i)
      if (active_[(std::size_t)i]) u[3 * i + c] -= mean;
  }
}

std::vector<double> PeriodicElasticity::load_strain_basis(const Mat3& E) const {
  const ElemBasis& B = ElemBasis::get();
  const ElementMesh& mesh = geom_->mesh;
  double h = mesh.h, vol = h * h * h;
  Mandel6 sig = A_.apply(to_mandel(E));
  // per-node load -int A E : e(v): constant over elements, precompute the
  // 24 entries once per Gauss point
  double le[24] = {0};
  Vec3 ei[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  for (int g = 0; g < ElemBasis::kGauss; ++g)
    for (int a = 0; a < 8; ++a) {
      Vec3 grad{B.dN[g][a][0] / h, B.dN[g][a][1] / h, B.dN[g][a][2] / h};
      for (int c = 0; c < 3; ++c) {
        Mandel6 bm = to_mandel(sym_dyad(ei[c], grad));
        double s = 0;
        for (int k = 0; k < 6; ++k) s += sig[k] * bm[k];
        le[3 * a + c] -= B.w[g] * vol * s;
      }
    }
  std::vector<double> rhs((std::size_t)vec_len(), 0.0);
  for (std::int64_t e : geom_->hard_elems) {
    int ix, iy, iz;
    mesh.elem_coords(e, ix, iy, iz);
    std::int64_t nodes[8];
    mesh.elem_nodes(ix, iy, iz, nodes);
    for (int a = 0; a < 8; ++a)
      for (int c = 0; c < 3; ++c) rhs[(std::size_t)(3 * nodes[a] + c)] += le[3 * a + c];
  }
  return rhs;
}

std::vector<double> PeriodicElasticity::load_cross(const std::vector<double>& b_nodal,
                                                   int j) const {
  const ElemBasis& B = ElemBasis::get();
  const ElementMesh& mesh = geom_->mesh;
  double h = mesh.h, vol = h * h * h;
  Vec3 ej{0, 0, 0};
  ej[j] = 1;
  std::vector<double> rhs((std::size_t)vec_len(), 0.0);
  for (std::int64_t e : geom_->hard_elems) {
    int ix, iy, iz;
    mesh.elem_coords(e, ix, iy, iz);
    std::int64_t nodes[8];
    mesh.elem_nodes(ix, iy, iz, nodes);
    double loc[24];
    gather_vec(b_nodal.data(), nodes, loc);
    for (int g = 0; g < ElemBasis::kGauss; ++g) {
      Vec3 bg = value_at(loc, g);
      Vec3 f = cross(bg, ej);
      for (int a = 0; a < 8; ++a)
        for (int c = 0; c < 3; ++c)
          rhs[(std::size_t)(3 * nodes[a] + c)] -= B.w[g] * vol * f[c] * B.N[g][a];
    }
  }
  return rhs;
}

//--------------------------------------------------------------------------
// ConstrainedForms
//--------------------------------------------------------------------------

ConstrainedForms::ConstrainedForms(const ElasticTensor& A2, const SampledField& field,
                                   const CellGeometry& geom)
    : geom_(&geom) {
  const ElemBasis& B = ElemBasis::get();
  const ElementMesh& mesh = geom.mesh;
  double h = mesh.h, vol = h * h * h;
  std::int64_t nn = mesh.num_nodes();

  std::vector<std::int32_t> node_dof((std::size_t)nn, -1);
  for (std::int64_t i = 0; i < nn; ++i)
    if (geom.node_interior2[(std::size_t)i]) {
      node_dof[(std::size_t)i] = (std::int32_t)dof_nodes_.size();
      dof_nodes_.push_back(i);
    }
  diagS_.assign(dof_nodes_.size(), 0.0);
  diagM_.assign(dof_nodes_.size(), 0.0);

  elems_.resize(geom.soft_elems.size());
  for (std::size_t ei = 0; ei < geom.soft_elems.size(); ++ei) {
    std::int64_t e = geom.soft_elems[ei];
    int ix, iy, iz;
    mesh.elem_coords(e, ix, iy, iz);
    std::int64_t nodes[8];
    mesh.elem_nodes(ix, iy, iz, nodes);
    ElemData& ed = elems_[ei];
    double bh[24];
    gather_vec(field.bhat.data(), nodes, bh);
    for (int a = 0; a < 8; ++a) {
      ed.dof[a] = node_dof[(std::size_t)nodes[a]];
      ed.c[a] = 0;
      ed.q[a][0] = ed.q[a][1] = ed.q[a][2] = 0;
    }
    for (int i = 0; i < 64; ++i) ed.Se[i] = ed.Me[i] = 0;

    for (int g = 0; g < ElemBasis::kGauss; ++g) {
      Vec3 bg = value_at(bh, g);
      Mandel6 ebm = strain_at(bh, g, h);
      Mandel6 Ceb = A2.apply(ebm);
      double w = B.w[g] * vol;
      Mandel6 Ba[8];
      for (int a = 0; a < 8; ++a) {
        Vec3 grad{B.dN[g][a][0] / h, B.dN[g][a][1] / h, B.dN[g][a][2] / h};
        Mandel6 m = to_mandel(sym_dyad(bg, grad));
        for (int k = 0; k < 6; ++k) m[k] += B.N[g][a] * ebm[k];
        Ba[a] = m;
      }
      Mandel6 CBa[8];
      for (int a = 0; a < 8; ++a) CBa[a] = A2.apply(Ba[a]);
      double b2 = dot(bg, bg);
      for (int a = 0; a < 8; ++a) {
        for (int b = 0; b < 8; ++b) {
          double s = 0;
          for (int k = 0; k < 6; ++k) s += Ba[a][k] * CBa[b][k];
          ed.Se[8 * a + b] += w * s;
          ed.Me[8 * a + b] += w * B.N[g][a] * B.N[g][b] * b2;
        }
        double cc = 0;
        for (int k = 0; k < 6; ++k) cc += CBa[a][k] * ebm[k];
        ed.c[a] += w * cc;
        for (int d = 0; d < 3; ++d) ed.q[a][d] += w * B.N[g][a] * bg[d];
      }
      double ce = 0;
      for (int k = 0; k < 6; ++k) ce += Ceb[k] * ebm[k];
      cstar_ += w * ce;
      int_bhat2_ += w * b2;
      int_bhat_ = int_bhat_ + w * bg;
      // transverse projector I - n (x) n; where the direction degenerates
      // the identity acts identically on the retained direction
      for (int i = 0; i < 3; ++i) {
        proj2_.m[i][i] += w;
        if (b2 > 1e-24)
          for (int j = 0; j < 3; ++j) proj2_.m[i][j] -= w * bg[i] * bg[j] / b2;
      }
    }
    for (int a = 0; a < 8; ++a)
      if (ed.dof[a] >= 0) {
        diagS_[(std::size_t)ed.dof[a]] += ed.Se[8 * a + a];
        diagM_[(std::size_t)ed.dof[a]] += ed.Me[8 * a + a];
      }
  }
}

void ConstrainedForms::applyS(const double* s, double* out) const {
  std::int64_t n = ndof();
  for (std::int64_t i = 0; i < n; ++i) out[i] = 0.0;
  for (const ElemData& ed : elems_) {
    double loc[8];
    for (int a = 0; a < 8; ++a) loc[a] = ed.dof[a] >= 0 ? s[ed.dof[a]] : 0.0;
    for (int a = 0; a < 8; ++a) {
      if (ed.dof[a] < 0) continue;
      double acc = 0;
      const double* row = &ed.Se[8 * a];
      for (int b = 0; b < 8; ++b) acc += row[b] * loc[b];
      out[ed.dof[a]] += acc;
    }
  }
}

void ConstrainedForms::applyM(const double* s, double* out) const {
  std::int64_t n = ndof();
  for (std::int64_t i = 0; i < n; ++i) out[i] = 0.0;
  for (const ElemData& ed : elems_) {
    double loc[8];
    for (int a = 0; a < 8; ++a) loc[a] = ed.dof[a] >= 0 ? s[ed.dof[a]] : 0.0;
    for (int a = 0; a < 8; ++a) {
      if (ed.dof[a] < 0) continue;
      double acc = 0;
      const double* row = &ed.Me[8 * a];
      for (int b = 0; b < 8; ++b) acc += row[b] * loc[b];
      out[ed.dof[a]] += acc;
    }
  }
}

Vec3 ConstrainedForms::integral_s_bhat(const double* s) const {
  Vec3 r{0, 0, 0};
  for (const ElemData& ed : elems_)
    for (int a = 0; a < 8; ++a)
      if (ed.dof[a] >= 0) {
        double sa = s[ed.dof[a]];
        r[0] += sa * ed.q[a][0];
        r[1] += sa * ed.q[a][1];
        r[2] += sa * ed.q[a][2];
      }
  return r;
}

double ConstrainedForms::coupling_c(const double* s) const {
  double r = 0;
  for (const ElemData& ed : elems_)
    for (int a = 0; a < 8; ++a)
      if (ed.dof[a] >= 0) r += s[ed.dof[a]] * ed.c[a];
  return r;
}

std::vector<double> ConstrainedForms::load_scalar(const std::function<double(Vec3)>& f) const {
  const ElemBasis& B = ElemBasis::get();
  const ElementMesh& mesh = geom_->mesh;
  double h = mesh.h, vol = h * h * h;
  std::vector<double> rhs(dof_nodes_.size(), 0.0);
  for (std::size_t ei = 0; ei < elems_.size(); ++ei) {
    std::int64_t e = geom_->soft_elems[ei];
    int ix, iy, iz;
    mesh.elem_coords(e, ix, iy, iz);
    for (int g = 0; g < ElemBasis::kGauss; ++g) {
      Vec3 y{(ix + B.gp[g][0]) * h, (iy + B.gp[g][1]) * h, (iz + B.gp[g][2]) * h};
      double fg = f(y);
      for (int a = 0; a < 8; ++a)
        if (elems_[ei].dof[a] >= 0)
          rhs[(std::size_t)elems_[ei].dof[a]] += B.w[g] * vol * fg * B.N[g][a];
    }
  }
  return rhs;
}

double ConstrainedForms::l2_error(const double* s, const std::function<double(Vec3)>& g) const {
  const ElemBasis& B = ElemBasis::get();
  const ElementMesh& mesh = geom_->mesh;
  double h = mesh.h, vol = h * h * h;
  double acc = 0;
  for (std::size_t ei = 0; ei < elems_.size(); ++ei) {
    std::int64_t e = geom_->soft_elems[ei];
    int ix, iy, iz;
    mesh.elem_coords(e, ix, iy, iz);
    double loc[8];
    for (int a = 0; a < 8; ++a) loc[a] = elems_[ei].dof[a] >= 0 ? s[elems_[ei].dof[a]] : 0.0;
    for (int gq = 0; gq < ElemBasis::kGauss; ++gq) {
      Vec3 y{(ix + B.gp[gq][0]) * h, (iy + B.gp[gq][1]) * h, (iz + B.gp[gq][2]) * h};
      double sh = 0;
      for (int a = 0; a < 8; ++a) sh += loc[a] * B.N[gq][a];
      double d = sh - g(y);
      acc += B.w[gq] * vol * d * d;
    }
  }
  return acc;
}

}  // namespace memcell
