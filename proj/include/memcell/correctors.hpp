#pragma once
// Periodic corrector problems on the matrix phase and the homogenized
// coefficients assembled from them.

#include <array>
#include <cstdint>
#include <vector>

#include "core.hpp"
#include "fem.hpp"
#include "unitcell.hpp"

namespace memcell {

struct CorrectorSet {
  // w[J]: response to the 6 symmetric strain basis matrices, Mandel order
  // (11, 22, 33, 23, 13, 12); theta[j]: response to the cross-product load.
  // All periodic nodal vector fields, zero mean over the matrix nodes.
  std::array<std::vector<double>, 6> w;
  std::array<std::vector<double>, 3> theta;
};

// strain basis: E_J = e_i (.) e_j for the Mandel index pairs
inline Mat3 strain_basis(int J) {
  static const int pairs[6][2] = {{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}};
  Vec3 ei{0, 0, 0}, ej{0, 0, 0};
  ei[pairs[J][0]] = 1;
  ej[pairs[J][1]] = 1;
  return sym_dyad(ei, ej);
}

struct HomogenizedCoefficients {
  std::array<double, 36> A1star{};  // effective elasticity, 6x6 Mandel matrix
  Mat3 A1dir{};                     // A1dir z = A1star (z (.) xi) xi
  Mat3 V1star{};                    // int_{Y1} e_y(theta_j) xi_j  (symmetric)
  Mat3 Wstar{};                     // Wstar : E = xi . int_{Y1} b x w_E
  double mstar = 0;                 // xi . int_{Y1} b x (V xi)
  double mstar_dual_dev = 0;        // relative deviation of the two mstar routes
  double Mstar = 0;                 // |Y1| + mstar + int_{Y2}|bhat|^2
  double cstar = 0;                 // int_{Y2} A2 e(bhat):e(bhat)
  Vec3 lambdastar{0, 0, 0};         // lambdastar . z = Wstar:(xi (.) z) - (V1star xi) . z
  Vec3 mustar{0, 0, 0};             // |Y1| xi + int_{Y2} bhat
  double vol1 = 0, vol2 = 0;
  double int_bhat2 = 0;
  Vec3 xi{0, 0, 0};
  Mat3 proj2{};  // int_{Y2} (I - n (x) n) dy
  bool fixed_direction = false;

  double wstar_of(const Mat3& E) const { return contract(Wstar, E); }
  Vec3 a1dir_times(Vec3 z) const { return A1dir * z; }
};

struct CorrectorOptions {
  double cg_tol = 1e-10;
  int cg_maxiter = 20000;
};

// Solves the 6 strain correctors and 3 cross-product correctors on Y1.
CorrectorSet solve_correctors(const PeriodicElasticity& op, const SampledField& field,
                              CorrectorOptions opt = {});

// Assembles every effective coefficient by quadrature; checks the two
// independent mstar routes against each other (1e-8 relative).  Pass
// forms = nullptr for a cell without an inclusion (patch test); the
// inclusion integrals are then zero.
HomogenizedCoefficients homogenized_coefficients(const PeriodicElasticity& op,
                                                 const CorrectorSet& cs,
                                                 const SampledField& field,
                                                 const ConstrainedForms* forms);

}  // namespace memcell
