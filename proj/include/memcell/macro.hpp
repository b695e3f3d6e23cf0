#pragma once
// Macroscopic solver for the scalar slip field alpha: explicit central
// second difference on the memory bracket, exact trigonometric propagation
// of the convolution registers, finite differences in space.

#include <functional>
#include <vector>

#include "core.hpp"
#include "correctors.hpp"
#include "expr.hpp"
#include "kernel.hpp"

namespace memcell {

struct MacroGrid {
  int n = 32;             // cells per axis, spacing 1/n
  bool periodic = false;  // default: homogeneous Dirichlet on the unit cube
  double hx = 0;
  int m = 0;  // stored nodes per axis (n-1 interior, or n when periodic)
  int num_nodes = 0;

  MacroGrid() = default;
  MacroGrid(int n_, bool periodic_);
  int idx(int i, int j, int k) const { return (i * m + j) * m + k; }
  Vec3 node_x(int i, int j, int k) const {
    int o = periodic ? 0 : 1;
    return Vec3{(i + o) * hx, (j + o) * hx, (k + o) * hx};
  }
};

struct MacroData {
  VecExpr u0, v0, f;
  double alpha_dot0 = 0;  // spatially uniform initial slip rate
};

struct MacroOptions {
  int n = 32;
  bool periodic = false;
  double dt = 0;      // 0: from the spatial stability bound
  int modes_cap = -1; // -1: every mode in the bundle (registers cost 2 fields each)
  double growth_guard = 1e6;
  double snap_interval = 0;  // >0: shrink dt so this interval is a whole number of steps
};

// div(A1* e(u0) xi) on the grid by fourth-order finite differences of the
// analytic initial displacement.
std::vector<double> div_stress_u0(const MacroGrid& g, const HomogenizedCoefficients& hc,
                                  const VecExpr& u0, Vec3 xi);

// Modal forcing at time t: resonant initial-velocity terms, forcing terms
// through the oscillator registers k_i, and the initial-stress divergence.
// kreg holds one field per retained mode (empty when f vanishes).
std::vector<double> assemble_forcing_F(const MacroGrid& g, const HomogenizedCoefficients& hc,
                                       const KernelBundle& kb, int modes_cap, const MacroData& data,
                                       double t, const std::vector<std::vector<double>>& kreg);

class MacroSolver {
 public:
  MacroSolver(const HomogenizedCoefficients& hc, const KernelBundle& kb, const MacroData& data,
              const MacroOptions& opt);

  void step();
  void advance_to(double T);  // whole steps until time() >= T - dt/2

  const MacroGrid& grid() const { return grid_; }
  double time() const { return time_; }
  double dt() const { return dt_; }
  int steps() const { return step_; }
  int modes() const { return cap_; }
  double bracket_coefficient() const { return C_; }

  const std::vector<double>& alpha() const { return alpha_; }
  const std::vector<double>& alpha_prev() const { return alpha_prev_; }
  const std::vector<double>& reg_r(int i) const { return r_[i]; }
  const std::vector<double>& reg_z(int i) const { return z_[i]; }
  const std::vector<double>& reg_k(int i) const { return kreg_[i]; }

  double mean_alpha() const;
  double max_abs_alpha() const;
  double alpha_at(Vec3 x) const;  // trilinear, zero outside (Dirichlet)

  struct Limits {
    std::vector<Vec3> u1;      // hard-phase limit per unit volume
    std::vector<Vec3> u2avg;   // inclusion fluctuation average
    std::vector<Vec3> sigma;   // A1dir grad(alpha)
    std::vector<double> ubar;  // (weak limit of u_eps) . xi; empty unless reduction holds
  };
  Limits reconstruct(bool want_ubar) const;
  Vec3 u1_at(Vec3 x) const;
  Vec3 u2avg_at(Vec3 x) const;

 private:
  friend std::vector<double> assemble_forcing_F(const MacroGrid&, const HomogenizedCoefficients&,
                                                const KernelBundle&, int, const MacroData&, double,
                                                const std::vector<std::vector<double>>&);
  void forcing(double t, std::vector<double>& out) const;
  void eval_G(double t, const std::vector<double>& a, const std::vector<double>& vt,
              std::vector<double>& out) const;
  void startup();
  void update_registers();
  double interp(const std::vector<double>& fld, Vec3 x) const;

  HomogenizedCoefficients hc_;
  KernelBundle kb_;
  MacroData data_;
  MacroGrid grid_;
  int cap_ = 0;
  double dt_ = 0, time_ = 0, C_ = 0, guard_ = 1e6, base_ = 0;
  int step_ = 0;
  bool has_f_ = false, has_v0_ = false, has_u0_ = false;
  std::vector<double> alpha_, alpha_prev_, alpha_prev2_;
  std::vector<double> w_, w_prev_;
  std::vector<std::vector<double>> r_, z_;         // cos / sin convolution registers
  std::vector<std::vector<double>> kreg_, kdot_;   // forced oscillator registers
  std::vector<std::vector<double>> hv_;            // (hbar_i . v0)(x)
  std::vector<double> divterm_;                    // div(A1* e(u0) xi)
  std::vector<Vec3> u0n_, v0n_;                    // nodal initial data
  std::vector<double> cosd_, sind_;                // cos/sin(mu_i dt)
  mutable std::vector<Vec3> fnow_;                 // scratch nodal forcing
};

// Dense reference for one retained mode with spatially constant data on the
// periodic variant: RK4 on (alpha, d/dt bracket, r, z).
std::vector<double> single_mode_dense_reference(double Mstar, double cstar, double mu, double a,
                                                double c_times_hx, double alpha_dot0,
                                                const std::function<double(double)>& rhs,
                                                double T, int nt, int substeps = 200);

}  // namespace memcell
