#pragma once
// Generalized eigenproblem S s = mu^2 M s on the inclusion's constrained
// space: inverse-operator Krylov subspace with full reorthogonalization in
// the M-inner product and Rayleigh-Ritz extraction of the lowest modes.

#include <cstdint>
#include <vector>

#include "core.hpp"
#include "fem.hpp"

namespace memcell {

struct ModeSet {
  int N = 0;                           // retained mode count
  std::vector<double> mu;              // angular frequencies, ascending, mu > 0
  std::vector<std::vector<double>> s;  // nodal coefficients per mode (compact dofs)
  std::vector<Vec3> hbar;              // int_{Y2} s_i bhat dy
  std::uint64_t fingerprint = 0;       // geometry/field fingerprint for staleness checks
};

struct SolveModesOptions {
  double cg_tol = 1e-12;       // inner solves
  double residual_tol = 1e-8;  // ||S s - mu^2 M s|| <= tol ||M s||
  int max_basis = 0;           // 0 = automatic cap
};

// Lowest `count` modes (clamped to the space dimension).  Deterministic:
// fixed internal seed, ordered reductions.  Throws on stagnation, reporting
// the converged count.
ModeSet solve_modes(const ConstrainedForms& forms, int count, std::uint64_t fingerprint = 0,
                    SolveModesOptions opt = {});

// int_{Y2}|bhat|^2 dy - sum_{i<=upto} (hbar_i . xi)^2   (upto<0: all modes)
double sum_rule_defect(const ModeSet& modes, double int_bhat2, Vec3 xi, int upto = -1);

}  // namespace memcell
