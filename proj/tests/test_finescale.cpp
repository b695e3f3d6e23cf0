#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstring>
#include <vector>

#include "doctest.h"
#include "memcell/fem.hpp"
#include "memcell/finescale.hpp"
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

FieldSpec axis_spec() {
  FieldSpec fs;
  fs.fixed_direction = true;
  fs.xi = {0, 0, 1};
  fs.gamma = Expr("1");
  fs.support_inclusion = true;
  return fs;
}

}  // namespace

TEST_CASE("plane shear wave without field or inclusion converges at second order") {
  InclusionSpec none;
  auto cell = build_geometry(none, 8);
  ElasticTensor A = ElasticTensor::isotropic(1.3, 1.0);
  MacroData data;
  data.v0.c[2] = Expr("sin(2*pi*x1)");
  auto run = [&](int vox) {
    FineOptions opt;
    opt.eps = 1.0;
    opt.periodic = true;
    FineSolver fs(A, A, cell, FieldSpec{}, data, vox, opt);
    fs.advance_to(0.3);
    double tf = fs.time(), err = 0;
    const auto& mesh = fs.mesh();
    double h = mesh.h;
    for (std::int64_t n = 0; n < mesh.num_nodes(); ++n) {
      int ix, iy, iz;
      mesh.node_coords(n, ix, iy, iz);
      double want = std::sin(2 * M_PI * ix * h) * std::sin(2 * M_PI * tf) / (2 * M_PI);
      err = std::fmax(err, std::fabs(fs.displacement()[3 * n + 2] - want));
    }
    return err;
  };
  double e8 = run(8), e16 = run(16);
  CHECK(e16 < 5e-3);
  CHECK(e8 / e16 >= 3.0);
}

TEST_CASE("fine mesh tiles the cell mask periodically") {
  auto cell = example_cell(8);
  MacroData data;
  FineOptions opt;
  opt.eps = 0.25;
  FineSolver fs(ElasticTensor::isotropic(2, 1), ElasticTensor::isotropic(1, 1), cell, axis_spec(),
                data, 8, opt);
  CHECK(fs.cells_per_side() == 4);
  const auto& mesh = fs.mesh();
  CHECK(mesh.nx == 32);
  int soft_count = 0;
  for (int ix = 0; ix < 8; ++ix)
    for (int iy = 0; iy < 8; ++iy)
      for (int iz = 0; iz < 8; ++iz) {
        bool base = fs.soft_voxel(mesh.elem_index(ix, iy, iz));
        soft_count += base ? 1 : 0;
        CHECK(base == fs.soft_voxel(mesh.elem_index(ix + 8, iy + 16, iz + 24)));
        CHECK(base == cell.soft_at(ix, iy, iz));
      }
  CHECK(soft_count == 64);

  // element matrices: assembly is linear in the tensor, soft block carries eps^2
  auto ref = elasticity_element_matrix(ElasticTensor::isotropic(1, 1), mesh.h);
  const auto& ke2 = fs.soft_element_matrix();
  for (int k = 0; k < 576; ++k)
    CHECK(std::fabs(ke2[k] - ref[k] / 16.0) <= 1e-15 * (1 + std::fabs(ref[k])));
}

TEST_CASE("staggered energy is conserved without forcing") {
  auto cell = example_cell(8);
  MacroData data;
  data.v0.c[2] = Expr("sin(pi*x1)*sin(pi*x2)*sin(pi*x3)");
  FineOptions opt;
  opt.eps = 0.25;
  FineSolver fs(ElasticTensor::isotropic(2, 1), ElasticTensor::isotropic(1, 1), cell, axis_spec(),
                data, 8, opt);
  fs.step();
  double e1 = fs.energy_staggered();
  REQUIRE(e1 > 0);
  for (int s = 0; s < 200; ++s) fs.step();
  CHECK(std::fabs(fs.energy_staggered() - e1) <= 1e-10 * e1);
  // the Lorentz substep is an exact rotation
  CHECK(fs.max_rotation_norm_dev() <= 4 * 2.3e-16);
  CHECK(fs.work_accum() == 0.0);
}

TEST_CASE("forced run balances energy against accumulated work") {
  auto cell = example_cell(8);
  MacroData data;
  data.v0.c[2] = Expr("sin(pi*x1)*sin(pi*x2)*sin(pi*x3)");
  data.f.c[2] = Expr("0.3*sin(2*t)*sin(pi*x1)*sin(pi*x2)");
  FineOptions opt;
  opt.eps = 0.25;
  FineSolver fs(ElasticTensor::isotropic(2, 1), ElasticTensor::isotropic(1, 1), cell, axis_spec(),
                data, 8, opt);
  fs.step();
  double e1 = fs.energy_staggered(), w1 = fs.work_accum();
  for (int s = 0; s < 150; ++s) fs.step();
  double scale = std::fmax(std::fabs(fs.energy_staggered()), 1.0);
  CHECK(std::fabs((fs.energy_staggered() - e1) - (fs.work_accum() - w1)) <= 1e-11 * scale);
  CHECK(std::fabs(fs.work_accum()) > 1e-8);  // forcing actually acted
}

TEST_CASE("identical runs are bitwise reproducible") {
  auto cell = example_cell(8);
  MacroData data;
  data.v0.c[2] = Expr("sin(pi*x1)*sin(pi*x2)*sin(pi*x3)");
  FineOptions opt;
  opt.eps = 0.25;
  auto run = [&]() {
    FineSolver fs(ElasticTensor::isotropic(2, 1), ElasticTensor::isotropic(1, 1), cell,
                  axis_spec(), data, 8, opt);
    for (int s = 0; s < 50; ++s) fs.step();
    return fs;
  };
  auto a = run(), b = run();
  CHECK(a.displacement().size() == b.displacement().size());
  CHECK(std::memcmp(a.displacement().data(), b.displacement().data(),
                    a.displacement().size() * sizeof(double)) == 0);
  CHECK(std::memcmp(a.velocity().data(), b.velocity().data(),
                    a.velocity().size() * sizeof(double)) == 0);
}

TEST_CASE("constructor rejects invalid resolution, step and scale separation") {
  auto cell = example_cell(8);
  MacroData data;
  ElasticTensor A1 = ElasticTensor::isotropic(2, 1), A2 = ElasticTensor::isotropic(1, 1);
  FineOptions opt;
  opt.eps = 0.3;  // 1/eps not an integer
  CHECK_THROWS_AS(FineSolver(A1, A2, cell, axis_spec(), data, 8, opt), std::runtime_error);
  opt.eps = 0.25;
  CHECK_THROWS_AS(FineSolver(A1, A2, cell, axis_spec(), data, 12, opt), std::runtime_error);
  opt.dt = 0.5;  // far above the stability bound
  CHECK_THROWS_AS(FineSolver(A1, A2, cell, axis_spec(), data, 8, opt), std::runtime_error);
  opt.dt = 0;
  opt.snap_interval = 0.0123;
  FineSolver fs(A1, A2, cell, axis_spec(), data, 8, opt);
  double k = opt.snap_interval / fs.dt();
  CHECK(std::fabs(k - std::round(k)) <= 1e-9);
  CHECK(fs.dt() <= fs.dt_stable());
}

TEST_CASE("phase averages integrate the masked displacement") {
  auto cell = example_cell(8);
  MacroData data;
  data.v0.c[2] = Expr("sin(pi*x1)*sin(pi*x2)*sin(pi*x3)");
  FineOptions opt;
  opt.eps = 0.25;
  FineSolver fs(ElasticTensor::isotropic(2, 1), ElasticTensor::isotropic(1, 1), cell, axis_spec(),
                data, 8, opt);
  for (int s = 0; s < 20; ++s) fs.step();

  const auto& mesh = fs.mesh();
  const auto& u = fs.displacement();
  double h3 = mesh.h * mesh.h * mesh.h;
  Vec3 want[2] = {{0, 0, 0}, {0, 0, 0}};
  for (int ix = 0; ix < mesh.nx; ++ix)
    for (int iy = 0; iy < mesh.ny; ++iy)
      for (int iz = 0; iz < mesh.nz; ++iz) {
        std::int64_t e = mesh.elem_index(ix, iy, iz);
        int ph = fs.soft_voxel(e) ? 1 : 0;
        Vec3 avg{0, 0, 0};
        for (int c = 0; c < 8; ++c) {
          std::int64_t n =
              mesh.node_index(ix + ElemBasis::off[c][0], iy + ElemBasis::off[c][1],
                              iz + ElemBasis::off[c][2]);
          for (int d = 0; d < 3; ++d) avg[d] += u[3 * n + d];
        }
        for (int d = 0; d < 3; ++d) want[ph][d] += h3 * avg[d] / 8;
      }
  const double pv[2] = {0.875, 0.125};  // phase volume fractions
  for (int ph = 0; ph < 2; ++ph) {
    Vec3 got = fs.phase_mean(ph);  // integral divided by the phase volume
    for (int d = 0; d < 3; ++d)
      CHECK(got[d] == doctest::Approx(want[ph][d] / pv[ph]).epsilon(1e-10));
    auto cells = fs.phase_cell_averages(ph);  // per eps-cell, per cell volume
    REQUIRE((int)cells.size() == 64);
    Vec3 acc{0, 0, 0};
    for (const auto& cval : cells)
      for (int d = 0; d < 3; ++d) acc[d] += cval[d];
    double vol = 1.0 / 64.0;  // eps^3
    for (int d = 0; d < 3; ++d)
      CHECK(acc[d] * vol == doctest::Approx(got[d] * pv[ph]).epsilon(1e-10));
  }
}
