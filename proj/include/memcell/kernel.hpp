#pragma once
// Memory kernel in contracted modal form, the independent wave-equation
// route for its trace, and the discrete Volterra resolvent.

#include <cstdint>
#include <vector>

#include "core.hpp"
#include "fem.hpp"
#include "spectrum.hpp"

namespace memcell {

struct KernelBundle {
  std::vector<double> t;        // uniform grid 0..T
  double dt = 0, T = 0;
  std::vector<double> kbar1;    // sum_i cos(mu_i t) (hbar_i . xi)^2
  std::vector<Mat3> kbarbar;    // sum_i sin(mu_i t)/mu_i hbar_i (x) hbar_i
  // per-mode data carried along for the macro solver
  std::vector<double> mu;
  std::vector<Vec3> hbar;
  std::vector<double> hx;        // hbar_i . xi
  std::vector<double> weight;    // (hbar_i . xi)^2
  std::vector<double> coupling;  // c_i = int A2 e(s_i bhat):e(bhat)
  std::uint64_t fingerprint = 0;

  double kbar1_at(double time) const;        // exact cosine sum
  double kbar1_prime_at(double time) const;  // exact derivative of the sum
};

// Modal kernel data on a uniform grid; coupling coefficients by quadrature.
KernelBundle kernel_series(const ModeSet& modes, const ConstrainedForms& forms, Vec3 xi, double T,
                           double dt);

// Bundle from stored modal data (artifact reload; no eigensolve).
KernelBundle kernel_series_modal(const std::vector<double>& mu, const std::vector<Vec3>& hbar,
                                 const std::vector<double>& coupling, Vec3 xi, double T, double dt);

// Synthetic bundle from raw modal traces (tests and reduced models).
KernelBundle kernel_series_synthetic(const std::vector<double>& mu, const std::vector<double>& hx,
                                     const std::vector<double>& coupling, double T, double dt);

// Independent route: integrate the anisotropic scalar wave equation on the
// inclusion (Dirichlet, zero initial value, unit initial velocity) and
// return the integral of the time derivative on t_grid.  dt_request = 0
// takes 0.9x the CFL bound; an explicit dt above the bound is rejected with
// the stable value in the message.
std::vector<double> kernel_wave_oracle(const ElasticTensor& A2, const CellGeometry& geom, Vec3 xi,
                                       const std::vector<double>& t_grid, double dt_request = 0);

// Second-kind Volterra march: solves
//   (1 - k1_0) a(t) - int_0^t k1p(t-s) a(s) ds = g(t)
// by product trapezoidal quadrature, explicit in the history.  k1p holds
// the analytic derivative samples of the kernel trace on the same grid.
std::vector<double> volterra_resolve(double k1_0, const std::vector<double>& k1p,
                                     const std::vector<double>& g, double dt);

// Discrete resolvent: alpha = convolution(L, g) for every g with g(0)=0,
// built from the unit-impulse response of the march above.
std::vector<double> resolvent_kernel(double k1_0, const std::vector<double>& k1p, double dt);

// convolution (L * g)_n = sum_j L_{n-j} g_j restricted to the grid length
std::vector<double> convolve_resolvent(const std::vector<double>& L, const std::vector<double>& g);

}  // namespace memcell
