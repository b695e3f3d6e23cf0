#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "memcell/correctors.hpp"
#include "memcell/fem.hpp"
#include "memcell/unitcell.hpp"

using namespace memcell;

namespace {

CellGeometry example_cell(int n) {
  InclusionSpec spec;
  spec.shape = Shape::cube;
  spec.center = {0.5, 0.5, 0.5};
  spec.size = 0.5;
  return build_geometry(spec, n);
}

SampledField axis_field(const CellGeometry& g) {
  FieldSpec fs;
  fs.fixed_direction = true;
  fs.xi = {0, 0, 1};
  fs.gamma = Expr("1");
  fs.support_inclusion = true;
  return sample_field(fs, g);
}

double max_abs(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::fmax(m, std::fabs(x));
  return m;
}

}  // namespace

TEST_CASE("patch test: no inclusion leaves the matrix tensor untouched") {
  InclusionSpec spec;  // Shape::none
  auto g = build_geometry(spec, 8);
  REQUIRE(g.vol2 == 0.0);
  auto field = sample_field(FieldSpec{}, g);
  ElasticTensor A1 = ElasticTensor::isotropic(1.3, 0.8);
  PeriodicElasticity op(A1, g);
  auto cs = solve_correctors(op, field);
  for (int J = 0; J < 6; ++J) CHECK(max_abs(cs.w[J]) <= 1e-10);
  for (int j = 0; j < 3; ++j) CHECK(max_abs(cs.theta[j]) <= 1e-10);

  auto hc = homogenized_coefficients(op, cs, field, nullptr);
  const auto& ref = A1.mandel_matrix();
  for (int k = 0; k < 36; ++k) CHECK(std::abs(hc.A1star[k] - ref[k]) <= 1e-10);
  CHECK(hc.Mstar == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(hc.mstar == 0.0);
  CHECK(hc.cstar == 0.0);
  CHECK(hc.int_bhat2 == 0.0);
  CHECK(norm(hc.lambdastar) <= 1e-14);
  CHECK(hc.vol1 == 1.0);
}

TEST_CASE("example configuration: closed-form effective coefficients") {
  auto g = example_cell(8);
  auto field = axis_field(g);
  REQUIRE(field.fixed_direction);
  ElasticTensor A1 = ElasticTensor::isotropic(2.0, 1.0);
  ElasticTensor A2 = ElasticTensor::isotropic(1.0, 1.0);
  PeriodicElasticity op(A1, g);
  ConstrainedForms forms(A2, field, g);
  auto cs = solve_correctors(op, field);
  auto hc = homogenized_coefficients(op, cs, field, &forms);

  // b vanishes at every matrix-element corner, so the cross correctors are
  // identically zero and the memory mass collapses to the volume split.
  CHECK(std::abs(hc.Mstar - 1.0) <= 1e-12);
  CHECK(hc.mstar == 0.0);
  CHECK(hc.cstar == 0.0);
  CHECK(norm(hc.lambdastar) <= 1e-12);
  Vec3 dmu{hc.mustar[0], hc.mustar[1], hc.mustar[2] - 1.0};
  CHECK(norm(dmu) <= 1e-12);
  CHECK(hc.int_bhat2 == doctest::Approx(g.vol2).epsilon(1e-14));
  CHECK(hc.vol1 + hc.vol2 == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(hc.mstar_dual_dev <= 1e-8);
  CHECK(hc.fixed_direction);

  // effective elasticity: symmetric, elliptic, below the matrix-phase bound
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < i; ++j) CHECK(std::abs(hc.A1star[i * 6 + j] - hc.A1star[j * 6 + i]) <= 1e-10);
  double a[36], eig[6];
  for (int k = 0; k < 36; ++k) a[k] = hc.A1star[k];
  jacobi_eig(6, a, eig);
  CHECK(eig[0] > 0.05);

  Lcg rng(123);
  for (int trial = 0; trial < 5; ++trial) {
    Mat3 E{};
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) E[i][j] = E[j][i] = rng.uniform();
    Mandel6 em = to_mandel(E);
    double qs = 0;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) qs += em[i] * hc.A1star[i * 6 + j] * em[j];
    double bound = g.vol1 * A1.contract(em, em);
    CHECK(qs <= bound + 1e-10);
    CHECK(qs > 0);
  }

  // directional contraction consistent with the full tensor
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(std::abs(hc.A1dir[i][j] - hc.A1dir[j][i]) <= 1e-12);
  double ad[9], de[3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) ad[i * 3 + j] = hc.A1dir[i][j];
  jacobi_eig(3, ad, de);
  CHECK(de[0] > 0.01);
}

TEST_CASE("cross correctors activate on a matrix-supported field") {
  // hand-built sampled field: oscillation not parallel to xi on the matrix,
  // direction field pinned to xi on the inclusion
  auto g = example_cell(8);
  const int n = 8;
  const double h = 1.0 / n;
  SampledField f;
  std::int64_t nn = g.mesh.num_nodes();
  f.b.resize(3 * nn);
  f.bhat.assign(3 * nn, 0.0);
  for (std::int64_t nd = 0; nd < nn; ++nd) {
    int ix, iy, iz;
    g.mesh.node_coords(nd, ix, iy, iz);
    double x = ix * h, y = iy * h, z = iz * h;
    f.b[3 * nd + 0] = std::sin(2 * M_PI * y);
    f.b[3 * nd + 1] = std::sin(2 * M_PI * z);
    f.b[3 * nd + 2] = std::sin(2 * M_PI * x);
    f.bhat[3 * nd + 2] = 1.0;
  }
  f.xi = {0, 0, 1};
  f.rank = 1;
  f.fixed_direction = true;
  f.bmax = 1.0;

  ElasticTensor A1 = ElasticTensor::isotropic(2.0, 1.0);
  ElasticTensor A2 = ElasticTensor::isotropic(1.0, 1.0);
  PeriodicElasticity op(A1, g);
  ConstrainedForms forms(A2, f, g);
  auto cs = solve_correctors(op, f);
  double th = 0;
  for (int j = 0; j < 3; ++j) th = std::fmax(th, max_abs(cs.theta[j]));
  CHECK(th > 1e-4);

  auto hc = homogenized_coefficients(op, cs, f, &forms);
  CHECK(hc.mstar > 1e-5);  // energy form of the cross corrector
  CHECK(hc.mstar_dual_dev <= 1e-8);
  CHECK(hc.Mstar == doctest::Approx(g.vol1 + hc.mstar + hc.int_bhat2).epsilon(1e-14));
  CHECK(hc.int_bhat2 == doctest::Approx(g.vol2).epsilon(1e-14));
  CHECK(hc.cstar == 0.0);
  Vec3 dmu{hc.mustar[0], hc.mustar[1], hc.mustar[2] - 1.0};
  CHECK(norm(dmu) <= 1e-12);

  // stored drift vector matches its definition from Wstar and V1star
  for (int i = 0; i < 3; ++i) {
    Vec3 ei{0, 0, 0};
    ei[i] = 1;
    double want = contract(hc.Wstar, sym_dyad(f.xi, ei)) - dot(hc.V1star * f.xi, ei);
    CHECK(hc.lambdastar[i] == doctest::Approx(want).epsilon(1e-12));
  }
}
