#include "memcell/finescale.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace memcell {

FineSolver::FineSolver(const ElasticTensor& A1, const ElasticTensor& A2, const CellGeometry& cell,
                       const FieldSpec& field, const MacroData& data, int vox_per_cell,
                       const FineOptions& opt) {
  double inv = 1.0 / opt.eps;
  cells_ = (int)std::lround(inv);
  if (cells_ < 1 || std::fabs(inv - cells_) > 1e-9 * inv)
    throw std::runtime_error("fine: 1/eps must be an integer, got eps = " + std::to_string(opt.eps));
  eps_ = opt.eps;

  int celln = cell.mesh.nx;
  vox_ = vox_per_cell;
  if (vox_ < celln || vox_ % celln != 0)
    throw std::runtime_error("fine: voxels per cell (" + std::to_string(vox_) +
                             ") must be an integer refinement of the cell mask (" +
                             std::to_string(celln) + ")");
  int refine = vox_ / celln;

  int nvox = cells_ * vox_;
  mesh_ = ElementMesh{nvox, nvox, nvox, 1.0 / nvox, opt.periodic};
  double h = mesh_.h, vol = h * h * h;

  // exact tiling of the cell mask
  soft_.assign((std::size_t)mesh_.num_elems(), 0);
  std::int64_t nsoft = 0;
  for (int ix = 0; ix < nvox; ++ix)
    for (int iy = 0; iy < nvox; ++iy)
      for (int iz = 0; iz < nvox; ++iz) {
        int cx = (ix % vox_) / refine, cy = (iy % vox_) / refine, cz = (iz % vox_) / refine;
        if (cell.soft[(std::size_t)cell.mesh.elem_index(cx, cy, cz)]) {
          soft_[(std::size_t)mesh_.elem_index(ix, iy, iz)] = 1;
          ++nsoft;
        }
      }
  phase_vol_[1] = (double)nsoft * vol;
  phase_vol_[0] = (double)(mesh_.num_elems() - nsoft) * vol;

  ke1_ = elasticity_element_matrix(A1, h);
  ke2_ = elasticity_element_matrix(A2.scaled(eps_ * eps_), h);

  std::int64_t nn = mesh_.num_nodes();
  mass_.assign((std::size_t)nn, 0.0);
  for (std::int64_t e = 0; e < mesh_.num_elems(); ++e) {
    int ix, iy, iz;
    mesh_.elem_coords(e, ix, iy, iz);
    std::int64_t nodes[8];
    mesh_.elem_nodes(ix, iy, iz, nodes);
    for (int a = 0; a < 8; ++a) mass_[(std::size_t)nodes[a]] += vol / 8.0;
  }

  clamped_.assign((std::size_t)nn, 0);
  if (!opt.periodic) {
    for (std::int64_t node = 0; node < nn; ++node) {
      int ix, iy, iz;
      mesh_.node_coords(node, ix, iy, iz);
      if (ix == 0 || iy == 0 || iz == 0 || ix == mesh_.nnx() - 1 || iy == mesh_.nny() - 1 ||
          iz == mesh_.nnz() - 1)
        clamped_[(std::size_t)node] = 1;
    }
  }

  // fine-lattice interior test for the supported-amplitude option
  std::vector<std::uint8_t> interior;
  if (field.support_inclusion) {
    interior.assign((std::size_t)nn, 0);
    for (std::int64_t node = 0; node < nn; ++node) {
      int ix, iy, iz;
      mesh_.node_coords(node, ix, iy, iz);
      bool all_soft = true;
      for (int a = -1; a <= 0 && all_soft; ++a)
        for (int b = -1; b <= 0 && all_soft; ++b)
          for (int c = -1; c <= 0 && all_soft; ++c) {
            int jx = ix + a, jy = iy + b, jz = iz + c;
            if (mesh_.periodic) {
              jx = (jx + nvox) % nvox;
              jy = (jy + nvox) % nvox;
              jz = (jz + nvox) % nvox;
            } else if (jx < 0 || jy < 0 || jz < 0 || jx >= nvox || jy >= nvox || jz >= nvox) {
              all_soft = false;
              break;
            }
            if (!soft_[(std::size_t)mesh_.elem_index(jx, jy, jz)]) all_soft = false;
          }
      interior[(std::size_t)node] = all_soft ? 1 : 0;
    }
  }

  if (field.fixed_direction && std::fabs(norm(field.xi) - 1.0) > 1e-12)
    throw std::runtime_error("fine: field direction must be a unit vector");

  brot_.assign(3 * (std::size_t)nn, 0.0);
  for (std::int64_t node = 0; node < nn; ++node) {
    int ix, iy, iz;
    mesh_.node_coords(node, ix, iy, iz);
    Vec3 y{(double)(ix % vox_) / vox_, (double)(iy % vox_) / vox_, (double)(iz % vox_) / vox_};
    Vec3 val{0, 0, 0};
    bool masked = field.support_inclusion && !interior[(std::size_t)node];
    if (field.fixed_direction) {
      if (!field.gamma.empty() && !masked) val = field.gamma.eval(y, 0.0) * field.xi;
    } else if (!field.comp.empty() && !masked) {
      val = field.comp.eval(y, 0.0);
    }
    brot_[3 * (std::size_t)node + 0] = val[0] / eps_;
    brot_[3 * (std::size_t)node + 1] = val[1] / eps_;
    brot_[3 * (std::size_t)node + 2] = val[2] / eps_;
  }

  u_.assign(3 * (std::size_t)nn, 0.0);
  v_.assign(3 * (std::size_t)nn, 0.0);
  ku_.assign(3 * (std::size_t)nn, 0.0);
  has_f_ = !data.f.empty();
  if (has_f_) {
    fstore_ = data.f;
    fexpr_ = &fstore_;
    f_.assign(3 * (std::size_t)nn, 0.0);
  }
  for (std::int64_t node = 0; node < nn; ++node) {
    if (clamped_[(std::size_t)node]) continue;
    int ix, iy, iz;
    mesh_.node_coords(node, ix, iy, iz);
    Vec3 x{ix * h, iy * h, iz * h};
    Vec3 uu = data.u0.empty() ? Vec3{} : data.u0.eval(x, 0.0);
    Vec3 vv = data.v0.empty() ? Vec3{} : data.v0.eval(x, 0.0);
    for (int c = 0; c < 3; ++c) {
      u_[3 * (std::size_t)node + c] = uu[c];
      v_[3 * (std::size_t)node + c] = vv[c];
    }
  }

  // stability bound: largest eigenvalue of M^-1 K by power iteration (the
  // rotation is norm-preserving and imposes no restriction of its own)
  {
    std::vector<double> pv(3 * (std::size_t)nn), pw(3 * (std::size_t)nn);
    for (std::size_t i = 0; i < pv.size(); ++i)
      pv[i] = clamped_[i / 3] ? 0.0 : 1.0 + 0.5 * std::sin(0.7 + (double)i);
    double lam = 0;
    for (int it = 0; it < 60; ++it) {
      apply_K(pv, pw);
      double num = 0, den = 0, nrm = 0;
      for (std::int64_t node = 0; node < nn; ++node)
        for (int c = 0; c < 3; ++c) {
          std::size_t i = 3 * (std::size_t)node + c;
          if (clamped_[(std::size_t)node]) {
            pw[i] = 0;
            continue;
          }
          pw[i] /= mass_[(std::size_t)node];
          num += pv[i] * pw[i];
          den += pv[i] * pv[i];
          nrm += pw[i] * pw[i];
        }
      lam = num / den;
      nrm = std::sqrt(nrm);
      if (nrm == 0) throw std::runtime_error("fine: stability probe collapsed");
      for (std::size_t i = 0; i < pv.size(); ++i) pv[i] = pw[i] / nrm;
    }
    dt_stable_ = 2.0 / std::sqrt(lam * 1.02);
  }
  if (opt.dt > 0) {
    if (opt.dt > opt.cfl_safety * dt_stable_) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "fine: dt %.6g exceeds %.2f x the stability bound; largest accepted dt = %.6g",
                    opt.dt, opt.cfl_safety, opt.cfl_safety * dt_stable_);
      throw std::runtime_error(buf);
    }
    dt_ = opt.dt;
  } else {
    dt_ = opt.cfl_safety * dt_stable_;
  }
  if (opt.snap_interval > 0) {
    int ksnap = (int)std::ceil(opt.snap_interval / dt_ - 1e-9);
    dt_ = opt.snap_interval / std::max(ksnap, 1);
  }

  // startup: advance the velocity to the first half time by a half step
  if (has_f_) eval_force(0.0);
  apply_K(u_, ku_);
  double hdt = 0.5 * dt_;
  double wk = 0;
  for (std::int64_t node = 0; node < nn; ++node) {
    if (clamped_[(std::size_t)node]) continue;
    std::size_t i = 3 * (std::size_t)node;
    double m = mass_[(std::size_t)node];
    Vec3 fn = has_f_ ? Vec3{f_[i], f_[i + 1], f_[i + 2]} : Vec3{};
    Vec3 a = (1.0 / m) * (fn - Vec3{ku_[i], ku_[i + 1], ku_[i + 2]});
    Vec3 v{v_[i], v_[i + 1], v_[i + 2]};
    Vec3 vold = v;
    v = v + (0.5 * hdt) * a;
    Vec3 w{brot_[i], brot_[i + 1], brot_[i + 2]};
    double om = norm(w);
    if (om > 0) {
      Vec3 nax = (1.0 / om) * w;
      double phi = -om * hdt, cp = std::cos(phi), sp = std::sin(phi);
      v = cp * v + sp * cross(nax, v) + ((1 - cp) * dot(nax, v)) * nax;
    }
    v = v + (0.5 * hdt) * a;
    wk += dot(fn, 0.5 * (vold + v));
    v_[i] = v[0];
    v_[i + 1] = v[1];
    v_[i + 2] = v[2];
  }
  if (has_f_) work_ += hdt * wk;
}

void FineSolver::apply_K(const std::vector<double>& u, std::vector<double>& out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for_elements_colored(mesh_, [&](std::int64_t e, int ix, int iy, int iz) {
    const double* ke = soft_[(std::size_t)e] ? ke2_.data() : ke1_.data();
    std::int64_t nodes[8];
    mesh_.elem_nodes(ix, iy, iz, nodes);
    double loc[24], res[24];
    gather_vec(u.data(), nodes, loc);
    for (int a = 0; a < 24; ++a) {
      double acc = 0;
      for (int b = 0; b < 24; ++b) acc += ke[24 * a + b] * loc[b];
      res[a] = acc;
    }
    for (int a = 0; a < 8; ++a)
      for (int c = 0; c < 3; ++c) out[3 * (std::size_t)nodes[a] + c] += res[3 * a + c];
  });
}

void FineSolver::eval_force(double t) {
  std::int64_t nn = mesh_.num_nodes();
  double h = mesh_.h;
  // lumped load: nodal density times the nodal mass (unit material density)
  for (std::int64_t node = 0; node < nn; ++node) {
    int ix, iy, iz;
    mesh_.node_coords(node, ix, iy, iz);
    Vec3 val = fexpr_->eval(Vec3{ix * h, iy * h, iz * h}, t);
    double m = mass_[(std::size_t)node];
    f_[3 * (std::size_t)node + 0] = val[0] * m;
    f_[3 * (std::size_t)node + 1] = val[1] * m;
    f_[3 * (std::size_t)node + 2] = val[2] * m;
  }
}

void FineSolver::step() {
  std::int64_t nn = mesh_.num_nodes();
  if (has_f_) eval_force(time_);
  apply_K(u_, ku_);

  double wk = 0, devmax = rot_dev_;
  for (std::int64_t node = 0; node < nn; ++node) {
    if (clamped_[(std::size_t)node]) continue;
    std::size_t i = 3 * (std::size_t)node;
    double m = mass_[(std::size_t)node];
    Vec3 fn = has_f_ ? Vec3{f_[i], f_[i + 1], f_[i + 2]} : Vec3{};
    Vec3 a = (1.0 / m) * (fn - Vec3{ku_[i], ku_[i + 1], ku_[i + 2]});
    Vec3 v{v_[i], v_[i + 1], v_[i + 2]};
    Vec3 vold = v;
    v = v + (0.5 * dt_) * a;
    Vec3 w{brot_[i], brot_[i + 1], brot_[i + 2]};
    double om = norm(w);
    if (om > 0) {
      double before = norm(v);
      Vec3 nax = (1.0 / om) * w;
      double phi = -om * dt_, cp = std::cos(phi), sp = std::sin(phi);
      v = cp * v + sp * cross(nax, v) + ((1 - cp) * dot(nax, v)) * nax;
      if (before > 0) devmax = std::max(devmax, std::fabs(norm(v) - before) / before);
    }
    v = v + (0.5 * dt_) * a;
    wk += dot(fn, 0.5 * (vold + v));
    v_[i] = v[0];
    v_[i + 1] = v[1];
    v_[i + 2] = v[2];
  }
  rot_dev_ = devmax;
  if (has_f_) work_ += dt_ * wk;

  for (std::int64_t node = 0; node < nn; ++node) {
    std::size_t i = 3 * (std::size_t)node;
    u_[i] += dt_ * v_[i];
    u_[i + 1] += dt_ * v_[i + 1];
    u_[i + 2] += dt_ * v_[i + 2];
  }

  // staggered invariant: 1/2 |v|_M^2 + 1/2 <K u_n, u_{n+1}>, K u_n still in ku_
  double kin = 0, pot = 0;
  for (std::int64_t node = 0; node < nn; ++node) {
    std::size_t i = 3 * (std::size_t)node;
    double m = mass_[(std::size_t)node];
    kin += m * (v_[i] * v_[i] + v_[i + 1] * v_[i + 1] + v_[i + 2] * v_[i + 2]);
    pot += ku_[i] * u_[i] + ku_[i + 1] * u_[i + 1] + ku_[i + 2] * u_[i + 2];
  }
  e_stag_ = 0.5 * kin + 0.5 * pot;

  time_ += dt_;
  ++step_;
  if (step_ % 64 == 0 && !std::isfinite(e_stag_)) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "fine: solution lost finiteness at step %d (t=%.6g)", step_,
                  time_);
    throw std::runtime_error(buf);
  }
}

void FineSolver::advance_to(double T) {
  while (time_ < T - 0.5 * dt_) step();
}

double FineSolver::energy_plain() const {
  std::vector<double> tmp(u_.size());
  apply_K(u_, tmp);
  double pot = 0;
  for (std::size_t i = 0; i < u_.size(); ++i) pot += tmp[i] * u_[i];
  return kinetic() + 0.5 * pot;
}

double FineSolver::kinetic() const {
  double kin = 0;
  std::int64_t nn = mesh_.num_nodes();
  for (std::int64_t node = 0; node < nn; ++node) {
    std::size_t i = 3 * (std::size_t)node;
    double m = mass_[(std::size_t)node];
    kin += m * (v_[i] * v_[i] + v_[i + 1] * v_[i + 1] + v_[i + 2] * v_[i + 2]);
  }
  return 0.5 * kin;
}

std::vector<Vec3> FineSolver::phase_cell_averages(int phase) const {
  double h = mesh_.h, vol = h * h * h, cvol = eps_ * eps_ * eps_;
  std::vector<Vec3> out((std::size_t)cells_ * cells_ * cells_, Vec3{});
  for (int ix = 0; ix < mesh_.nx; ++ix)
    for (int iy = 0; iy < mesh_.ny; ++iy)
      for (int iz = 0; iz < mesh_.nz; ++iz) {
        std::int64_t e = mesh_.elem_index(ix, iy, iz);
        if ((int)soft_[(std::size_t)e] != phase) continue;
        std::int64_t nodes[8];
        mesh_.elem_nodes(ix, iy, iz, nodes);
        Vec3 acc{};
        for (int a = 0; a < 8; ++a) {
          std::size_t i = 3 * (std::size_t)nodes[a];
          acc = acc + Vec3{u_[i], u_[i + 1], u_[i + 2]};
        }
        int cx = ix / vox_, cy = iy / vox_, cz = iz / vox_;
        std::size_t ci = (std::size_t)(cx * cells_ + cy) * cells_ + cz;
        out[ci] = out[ci] + (vol / 8.0) * acc;
      }
  for (Vec3& v : out) v = (1.0 / cvol) * v;
  return out;
}

Vec3 FineSolver::phase_mean(int phase) const {
  double h = mesh_.h, vol = h * h * h;
  Vec3 acc{};
  for (int ix = 0; ix < mesh_.nx; ++ix)
    for (int iy = 0; iy < mesh_.ny; ++iy)
      for (int iz = 0; iz < mesh_.nz; ++iz) {
        std::int64_t e = mesh_.elem_index(ix, iy, iz);
        if ((int)soft_[(std::size_t)e] != phase) continue;
        std::int64_t nodes[8];
        mesh_.elem_nodes(ix, iy, iz, nodes);
        for (int a = 0; a < 8; ++a) {
          std::size_t i = 3 * (std::size_t)nodes[a];
          acc = acc + (vol / 8.0) * Vec3{u_[i], u_[i + 1], u_[i + 2]};
        }
      }
  double pv = phase_vol_[phase & 1];
  return pv > 0 ? (1.0 / pv) * acc : Vec3{};
}

}  // namespace memcell
