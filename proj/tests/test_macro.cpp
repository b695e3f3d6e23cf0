#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "memcell/kernel.hpp"
#include "memcell/macro.hpp"

using namespace memcell;

namespace {

HomogenizedCoefficients flat_coeffs(double Mstar, double cstar) {
  HomogenizedCoefficients hc;
  hc.Mstar = Mstar;
  hc.cstar = cstar;
  for (int i = 0; i < 3; ++i) hc.A1dir[i][i] = 1.0;
  for (int i = 0; i < 6; ++i) hc.A1star[i * 6 + i] = 2.0;  // unused by the stepper
  hc.mustar = {0, 0, 1};
  hc.xi = {0, 0, 1};
  hc.vol1 = 0.875;
  hc.vol2 = 0.125;
  hc.fixed_direction = true;
  return hc;
}

}  // namespace

TEST_CASE("convolution registers track the exact piecewise-constant quadrature") {
  auto hc = flat_coeffs(1.3, 0.3);
  const double mu = 5.0;
  auto kb = kernel_series_synthetic({mu}, {0.6}, {0.5}, 2.0, 0.01);
  MacroData data;
  data.alpha_dot0 = 1.0;
  MacroOptions opt;
  opt.n = 4;
  opt.periodic = true;
  opt.dt = 0.002;
  MacroSolver mac(hc, kb, data, opt);
  REQUIRE(mac.modes() == 1);

  std::vector<double> hist{0.0, mac.alpha()[0]};
  const int nsteps = 300;
  for (int s = 0; s < nsteps; ++s) {
    mac.step();
    hist.push_back(mac.alpha()[0]);
  }
  const double dt = mac.dt();
  const int n = (int)hist.size() - 1;
  double rr = 0, zr = 0;
  for (int j = 0; j < n; ++j) {
    double beta = (hist[j + 1] - hist[j]) / dt;
    rr += beta * (std::sin(mu * (n - j) * dt) - std::sin(mu * (n - j - 1) * dt)) / mu;
    zr += beta * (std::cos(mu * (n - j - 1) * dt) - std::cos(mu * (n - j) * dt)) / mu;
  }
  CHECK(std::fabs(mac.reg_r(0)[0] - rr) <= 1e-11 * (1 + std::fabs(rr)));
  CHECK(std::fabs(mac.reg_z(0)[0] - zr) <= 1e-11 * (1 + std::fabs(zr)));
  // spatially constant data: every node carries the same value
  CHECK(mac.alpha()[0] == mac.alpha()[mac.grid().num_nodes - 1]);
}

TEST_CASE("manufactured solution without memory converges at second order") {
  auto run = [](int n) {
    auto hc = flat_coeffs(1.0, 0.7);
    KernelBundle kb;  // no retained modes
    MacroData data;
    data.f.c[2] = Expr("(2 + (3*pi*pi + 0.7)*t*t) * sin(pi*x1)*sin(pi*x2)*sin(pi*x3)");
    MacroOptions opt;
    opt.n = n;
    MacroSolver mac(hc, kb, data, opt);
    mac.advance_to(0.25);
    double tf = mac.time(), err = 0;
    const auto& g = mac.grid();
    for (int i = 0; i < g.m; ++i)
      for (int j = 0; j < g.m; ++j)
        for (int k = 0; k < g.m; ++k) {
          Vec3 x = g.node_x(i, j, k);
          double want = tf * tf * std::sin(M_PI * x[0]) * std::sin(M_PI * x[1]) *
                        std::sin(M_PI * x[2]);
          err = std::fmax(err, std::fabs(mac.alpha()[g.idx(i, j, k)] - want));
        }
    return err;
  };
  double e8 = run(8), e16 = run(16);
  CHECK(e16 < 2e-3);
  CHECK(e8 / e16 >= 3.3);
  CHECK(e8 / e16 <= 5.0);
}

TEST_CASE("single retained mode agrees with the dense reference") {
  auto hc = flat_coeffs(1.3, 0.4);
  const double mu = 3.0, hx = 0.6, cpl = 0.5;
  auto kb = kernel_series_synthetic({mu}, {hx}, {cpl}, 1.0, 0.01);
  MacroData data;
  data.alpha_dot0 = 1.0;
  MacroOptions opt;
  opt.n = 4;
  opt.periodic = true;
  opt.dt = 0.0005;
  MacroSolver mac(hc, kb, data, opt);
  const int nt = 2000;
  auto ref = single_mode_dense_reference(1.3, 0.4, mu, hx * hx, cpl * hx, 1.0,
                                         [](double) { return 0.0; }, 1.0, nt, 20);
  double scale = 0, dev = 0;
  for (int k = 1; k <= nt; ++k) {
    if (k > 1) mac.step();
    scale = std::fmax(scale, std::fabs(ref[k]));
    dev = std::fmax(dev, std::fabs(mac.alpha()[0] - ref[k]));
  }
  CHECK(scale > 0.05);  // the run actually moves
  CHECK(dev <= 1e-4 * scale);
}

TEST_CASE("macro march agrees with the scalar resolvent equation") {
  // spatially constant, no elastic feedback (coupling 0, forcing orthogonal
  // to hbar): double time integration turns the evolution into the
  // second-kind equation handled by volterra_resolve.
  auto hc = flat_coeffs(1.3, 0.0);
  hc.mustar = {1, 0, 0};
  const double mu = 3.0, hx = 0.6;
  auto kb = kernel_series_synthetic({mu}, {hx}, {0.0}, 1.2, 0.01);
  MacroData data;
  data.f.c[0] = Expr("sin(3*t)");
  MacroOptions opt;
  opt.n = 4;
  opt.periodic = true;
  opt.dt = 0.0005;
  MacroSolver mac(hc, kb, data, opt);

  const int nt = 2000;
  const double dt = mac.dt();
  const double Mstar = 1.3, w = hx * hx;
  std::vector<double> k1p(nt + 1), g(nt + 1);
  for (int k = 0; k <= nt; ++k) {
    double t = k * dt;
    k1p[k] = -w * mu * std::sin(mu * t) / Mstar;
    g[k] = (t / 3.0 - std::sin(3 * t) / 9.0) / Mstar;
  }
  auto ref = volterra_resolve(w / Mstar, k1p, g, dt);

  double scale = 0, dev = 0;
  for (int k = 1; k <= nt; ++k) {
    if (k > 1) mac.step();
    scale = std::fmax(scale, std::fabs(ref[k]));
    dev = std::fmax(dev, std::fabs(mac.alpha()[0] - ref[k]));
  }
  CHECK(scale > 1e-3);
  CHECK(dev <= 1e-3 * scale);
}

TEST_CASE("mode cap, snap alignment and trilinear evaluation") {
  auto hc = flat_coeffs(1.5, 0.2);
  auto kb = kernel_series_synthetic({2.0, 6.0}, {0.4, 0.3}, {0.1, 0.2}, 1.0, 0.01);
  MacroData data;
  data.alpha_dot0 = 1.0;
  MacroOptions opt;
  opt.n = 4;
  opt.periodic = true;
  opt.modes_cap = 1;
  opt.dt = 0.001;
  opt.snap_interval = 0.0105;  // forces dt to divide the snap interval
  MacroSolver mac(hc, kb, data, opt);
  CHECK(mac.modes() == 1);
  double k = opt.snap_interval / mac.dt();
  CHECK(std::fabs(k - std::round(k)) <= 1e-9);

  mac.advance_to(0.1);
  // constant in space: trilinear interpolation returns the nodal value
  double a0 = mac.alpha()[0];
  CHECK(mac.alpha_at(Vec3{0.3, 0.7, 0.1}) == doctest::Approx(a0).epsilon(1e-12));
  CHECK(mac.mean_alpha() == doctest::Approx(a0).epsilon(1e-12));
  CHECK(mac.max_abs_alpha() == doctest::Approx(std::fabs(a0)).epsilon(1e-12));

  auto lim = mac.reconstruct(true);
  // u1 = u0 + alpha xi with u0 = 0
  CHECK(lim.u1[0][2] == doctest::Approx(a0).epsilon(1e-12));
  CHECK(lim.u1[0][0] == 0.0);
  // constant field: no effective stress
  double smax = 0;
  for (const auto& s : lim.sigma) smax = std::fmax(smax, norm(s));
  CHECK(smax <= 1e-12);
  CHECK(lim.ubar.size() == (std::size_t)mac.grid().num_nodes);
}

TEST_CASE("dirichlet evaluation vanishes outside and at the boundary") {
  auto hc = flat_coeffs(1.0, 0.0);
  KernelBundle kb;
  MacroData data;
  data.f.c[2] = Expr("sin(pi*x1)*sin(pi*x2)*sin(pi*x3)");
  MacroOptions opt;
  opt.n = 8;
  MacroSolver mac(hc, kb, data, opt);
  mac.advance_to(0.2);
  CHECK(mac.max_abs_alpha() > 1e-4);
  CHECK(mac.alpha_at(Vec3{-0.2, 0.5, 0.5}) == 0.0);
  CHECK(std::fabs(mac.alpha_at(Vec3{1e-9, 0.5, 0.5})) <= 1e-6);
  // interior evaluation sits near the nodal value
  const auto& g = mac.grid();
  Vec3 xc = g.node_x(3, 3, 3);
  CHECK(mac.alpha_at(xc) == doctest::Approx(mac.alpha()[g.idx(3, 3, 3)]).epsilon(1e-12));
}
