#include "memcell/correctors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace memcell {

CorrectorSet solve_correctors(const PeriodicElasticity& op, const SampledField& field,
                              CorrectorOptions opt) {
  CorrectorSet cs;
  auto apply = [&](const double* u, double* out) { op.apply(u, out); };
  auto project = [&](double* u) { op.project_translations(u); };
  CgOptions cg{opt.cg_tol, opt.cg_maxiter};
  for (int J = 0; J < 6; ++J) {
    std::vector<double> rhs = op.load_strain_basis(strain_basis(J));
    cg_solve(apply, rhs, cs.w[J], op.diagonal(), project, cg);
  }
  for (int j = 0; j < 3; ++j) {
    std::vector<double> rhs = op.load_cross(field.b, j);
    cg_solve(apply, rhs, cs.theta[j], op.diagonal(), project, cg);
  }
  return cs;
}

HomogenizedCoefficients homogenized_coefficients(const PeriodicElasticity& op,
                                                 const CorrectorSet& cs,
                                                 const SampledField& field,
                                                 const ConstrainedForms* forms) {
  const CellGeometry& geom = op.geom();
  const ElementMesh& mesh = geom.mesh;
  const ElemBasis& B = ElemBasis::get();
  const ElasticTensor& A1 = op.tensor();
  double h = mesh.h, vol = h * h * h;
  Vec3 xi = field.xi;

  // Mandel-basis correctors carry sqrt(2) on the shear pairs (the Mandel
  // basis matrix is sqrt(2) times the symmetrized dyad there)
  const double cJ[6] = {1, 1, 1, std::sqrt(2.0), std::sqrt(2.0), std::sqrt(2.0)};

  HomogenizedCoefficients hc;
  hc.vol1 = geom.vol1;
  hc.vol2 = geom.vol2;

  double mstar_cross = 0, mstar_quad = 0;
  Mandel6 v1acc{};  // int e(theta_j) xi_j, Mandel
  double wst[6] = {0, 0, 0, 0, 0, 0};

  for (std::int64_t e : geom.hard_elems) {
    int ix, iy, iz;
    mesh.elem_coords(e, ix, iy, iz);
    std::int64_t nodes[8];
    mesh.elem_nodes(ix, iy, iz, nodes);
    double wloc[6][24], tloc[3][24], bloc[24];
    for (int J = 0; J < 6; ++J) gather_vec(cs.w[J].data(), nodes, wloc[J]);
    for (int j = 0; j < 3; ++j) gather_vec(cs.theta[j].data(), nodes, tloc[j]);
    gather_vec(field.b.data(), nodes, bloc);

    for (int g = 0; g < ElemBasis::kGauss; ++g) {
      double wq = B.w[g] * vol;
      // effective elasticity, energy form on the Mandel basis
      Mandel6 m[6], Cm[6];
      for (int J = 0; J < 6; ++J) {
        Mandel6 ew = strain_at(wloc[J], g, h);
        Mandel6 eb = to_mandel(strain_basis(J));
        for (int k = 0; k < 6; ++k) m[J][k] = cJ[J] * (eb[k] + ew[k]);
        Cm[J] = A1.apply(m[J]);
      }
      for (int J = 0; J < 6; ++J)
        for (int K = 0; K < 6; ++K) {
          double s = 0;
          for (int k = 0; k < 6; ++k) s += m[J][k] * Cm[K][k];
          hc.A1star[(std::size_t)(6 * J + K)] += wq * s;
        }

      // theta strains and values
      Mandel6 eth[3];
      Vec3 thv[3];
      for (int j = 0; j < 3; ++j) {
        eth[j] = strain_at(tloc[j], g, h);
        thv[j] = value_at(tloc[j], g);
      }
      Mandel6 ethxi{};
      Vec3 thxi{0, 0, 0};
      for (int j = 0; j < 3; ++j) {
        for (int k = 0; k < 6; ++k) ethxi[k] += xi[j] * eth[j][k];
        thxi = thxi + xi[j] * thv[j];
      }
      for (int k = 0; k < 6; ++k) v1acc[k] += wq * ethxi[k];

      Vec3 bg = value_at(bloc, g);
      mstar_cross += wq * dot(xi, cross(bg, thxi));
      Mandel6 Ceth = A1.apply(ethxi);
      double qq = 0;
      for (int k = 0; k < 6; ++k) qq += Ceth[k] * ethxi[k];
      mstar_quad += wq * qq;

      // Wstar components: xi . int b x w_J (Mandel-scaled correctors)
      for (int J = 0; J < 6; ++J) {
        Vec3 wv = value_at(wloc[J], g);
        wst[J] += wq * cJ[J] * dot(xi, cross(bg, wv));
      }
    }
  }

  hc.V1star = from_mandel(v1acc);
  {
    Mandel6 wm{wst[0], wst[1], wst[2], wst[3], wst[4], wst[5]};
    hc.Wstar = from_mandel(wm);
  }

  double dev = std::fabs(mstar_cross - mstar_quad);
  double scale = std::fmax(std::fabs(mstar_cross), std::fabs(mstar_quad));
  hc.mstar_dual_dev = scale > 0 ? dev / scale : 0.0;
  if (dev > 1e-8 * std::fmax(scale, 1e-4))
    throw std::runtime_error("effective mass term: the two quadrature routes disagree (" +
                             std::to_string(mstar_cross) + " vs " + std::to_string(mstar_quad) +
                             ")");
  hc.mstar = mstar_quad;  // nonnegative form

  if (forms) {
    hc.int_bhat2 = forms->int_bhat2();
    hc.cstar = forms->cstar();
    hc.mustar = geom.vol1 * xi + forms->int_bhat();
    hc.proj2 = forms->proj2();
  } else {
    hc.mustar = geom.vol1 * xi;
  }
  hc.Mstar = geom.vol1 + hc.mstar + hc.int_bhat2;
  hc.xi = xi;
  hc.fixed_direction = field.fixed_direction;

  for (int i = 0; i < 3; ++i) {
    Vec3 ei{0, 0, 0};
    ei[i] = 1;
    hc.lambdastar[i] = contract(hc.Wstar, sym_dyad(xi, ei)) - dot(hc.V1star * xi, ei);
  }

  // directional matrix: A1dir_ij = (xi (.) e_i) : A1star (xi (.) e_j)
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Vec3 ei{0, 0, 0}, ej{0, 0, 0};
      ei[i] = 1;
      ej[j] = 1;
      Mandel6 mi = to_mandel(sym_dyad(ei, xi)), mj = to_mandel(sym_dyad(ej, xi));
      double s = 0;
      for (int a = 0; a < 6; ++a)
        for (int b = 0; b < 6; ++b) s += mi[a] * hc.A1star[(std::size_t)(6 * a + b)] * mj[b];
      hc.A1dir[i][j] = s;
    }
  return hc;
}

}  // namespace memcell
