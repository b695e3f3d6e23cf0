#pragma once
// Direct fine-scale simulation: explicit leapfrog with the Lorentz term
// integrated by a per-node kick-rotate-kick splitting (exact rotation, so
// the strong field imposes no time-step restriction), lumped mass, clamped
// boundary.  The staggered energy is an exact invariant when f = 0.

#include <array>
#include <cstdint>
#include <vector>

#include "core.hpp"
#include "fem.hpp"
#include "macro.hpp"
#include "unitcell.hpp"

namespace memcell {

struct FineOptions {
  double eps = 0.25;     // 1/eps must be an integer
  double dt = 0;         // 0: cfl_safety x stability bound
  double cfl_safety = 0.9;
  bool periodic = false;  // test variant; production runs are clamped
  double snap_interval = 0;  // >0: shrink dt so this interval is a whole number of steps
};

class FineSolver {
 public:
  // cell carries the phase mask; the fine mesh uses vox voxels per cell
  // axis where vox = cell resolution (or an integer refinement of it).
  FineSolver(const ElasticTensor& A1, const ElasticTensor& A2, const CellGeometry& cell,
             const FieldSpec& field, const MacroData& data, int vox_per_cell,
             const FineOptions& opt);

  void step();
  void advance_to(double T);

  double time() const { return time_; }
  double dt() const { return dt_; }
  int steps() const { return step_; }
  double dt_stable() const { return dt_stable_; }
  int cells_per_side() const { return cells_; }
  const ElementMesh& mesh() const { return mesh_; }

  double energy_staggered() const { return e_stag_; }
  double energy_plain() const;  // extra stiffness apply; for reporting
  double kinetic() const;
  double work_accum() const { return work_; }
  double max_rotation_norm_dev() const { return rot_dev_; }  // relative, per node

  const std::vector<double>& displacement() const { return u_; }
  const std::vector<double>& velocity() const { return v_; }
  bool soft_voxel(std::int64_t e) const { return soft_[(std::size_t)e] != 0; }

  // volume average of chi_phase u over each macro cell of size eps
  // (normalized by the full cell volume); phase: 0 = hard, 1 = soft
  std::vector<Vec3> phase_cell_averages(int phase) const;
  // global phase averages for the time series
  Vec3 phase_mean(int phase) const;

  const std::array<double, 576>& hard_element_matrix() const { return ke1_; }
  const std::array<double, 576>& soft_element_matrix() const { return ke2_; }

 private:
  void apply_K(const std::vector<double>& u, std::vector<double>& out) const;
  void eval_force(double t);

  ElementMesh mesh_;
  int cells_ = 0, vox_ = 0;
  double eps_ = 0;
  std::vector<std::uint8_t> soft_;    // per fine voxel
  std::array<double, 576> ke1_{}, ke2_{};
  std::vector<double> mass_;          // lumped, per node
  std::vector<std::uint8_t> clamped_; // per node
  std::vector<double> brot_;          // (1/eps) b at nodes, interleaved
  std::vector<double> u_, v_, ku_, f_;
  bool has_f_ = false;
  const VecExpr* fexpr_ = nullptr;
  VecExpr fstore_;
  double dt_ = 0, dt_stable_ = 0, time_ = 0;
  int step_ = 0;
  double e_stag_ = 0, work_ = 0, rot_dev_ = 0;
  double phase_vol_[2] = {0, 0};
};

}  // namespace memcell
