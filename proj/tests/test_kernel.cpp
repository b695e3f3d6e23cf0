#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <vector>

#include "doctest.h"
#include "memcell/fem.hpp"
#include "memcell/kernel.hpp"
#include "memcell/spectrum.hpp"
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

// closed-form trace of the axis-aligned unit field on the cube inclusion
// (side 1/2, lambda = mu = 1): separable Dirichlet modes, odd indices only
void analytic_trace(const std::vector<double>& t, int mmax, std::vector<double>* k,
                    double* captured) {
  k->assign(t.size(), 0.0);
  *captured = 0;
  const double c = 64.0 / std::pow(M_PI, 6);
  for (int m = 1; m <= mmax; m += 2)
    for (int n = 1; n <= mmax; n += 2)
      for (int p = 1; p <= mmax; p += 2) {
        double w = c / ((double)m * m * n * n * p * p);
        double om = 2 * M_PI * std::sqrt((double)m * m + n * n + 3.0 * p * p);
        *captured += w;
        for (std::size_t q = 0; q < t.size(); ++q) (*k)[q] += w * std::cos(om * t[q]);
      }
}

}  // namespace

TEST_CASE("synthetic bundle reproduces the trigonometric sums") {
  std::vector<double> mu{2.0, 5.0}, hx{0.3, 0.4}, cpl{1.0, 2.0};
  auto kb = kernel_series_synthetic(mu, hx, cpl, 2.0, 0.01);
  REQUIRE(kb.t.size() >= 2);
  CHECK(kb.dt == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(kb.weight[0] == doctest::Approx(0.09).epsilon(1e-14));
  CHECK(kb.coupling[1] == 2.0);
  for (std::size_t k = 0; k < kb.t.size(); k += 7) {
    double t = kb.t[k];
    double want = 0.09 * std::cos(2 * t) + 0.16 * std::cos(5 * t);
    CHECK(kb.kbar1[k] == doctest::Approx(want).epsilon(1e-13));
    CHECK(kb.kbar1_at(t) == doctest::Approx(want).epsilon(1e-13));
    double wantp = -(0.09 * 2 * std::sin(2 * t) + 0.16 * 5 * std::sin(5 * t));
    CHECK(kb.kbar1_prime_at(t) == doctest::Approx(wantp).epsilon(1e-13));
    double w33 = 0.09 / 2 * std::sin(2 * t) + 0.16 / 5 * std::sin(5 * t);
    CHECK(kb.kbarbar[k][2][2] == doctest::Approx(w33).epsilon(1e-13));
    CHECK(std::abs(kb.kbarbar[k][0][0]) + std::abs(kb.kbarbar[k][0][1]) <= 1e-15);
  }
}

TEST_CASE("modal bundle with oblique directions: symmetry and projection") {
  std::vector<double> mu{3.0, 7.0};
  std::vector<Vec3> hb{{0.2, -0.1, 0.5}, {-0.3, 0.4, 0.1}};
  Vec3 xi{0, 0, 1};
  auto kb = kernel_series_modal(mu, hb, {}, xi, 1.0, 0.02);
  CHECK(kb.hx[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(kb.hx[1] == doctest::Approx(0.1).epsilon(1e-14));
  auto ks = kernel_series_synthetic(mu, {0.5, 0.1}, {}, 1.0, 0.02);
  for (std::size_t k = 0; k < kb.t.size(); ++k) {
    CHECK(kb.kbar1[k] == doctest::Approx(ks.kbar1[k]).epsilon(1e-14));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        CHECK(kb.kbarbar[k][i][j] == doctest::Approx(kb.kbarbar[k][j][i]).epsilon(1e-14));
        double want = std::sin(mu[0] * kb.t[k]) / mu[0] * hb[0][i] * hb[0][j] +
                      std::sin(mu[1] * kb.t[k]) / mu[1] * hb[1][i] * hb[1][j];
        CHECK(kb.kbarbar[k][i][j] == doctest::Approx(want).epsilon(1e-13));
      }
  }
  CHECK_THROWS_AS(kernel_series_modal({-1.0}, {Vec3{0, 0, 1}}, {}, xi, 1.0, 0.1),
                  std::runtime_error);
}

TEST_CASE("volterra march: constant kernel solved exactly") {
  const double dt = 0.01;
  std::vector<double> g(101), k1p(101, 0.0);
  for (int n = 0; n <= 100; ++n) g[n] = std::sin(0.1 * n) + 0.4;
  auto a = volterra_resolve(0.3, k1p, g, dt);
  for (int n = 0; n <= 100; ++n) CHECK(a[n] == doctest::Approx(g[n] / 0.7).epsilon(1e-14));
  CHECK_THROWS_AS(volterra_resolve(1.0, k1p, g, dt), std::runtime_error);
  CHECK_THROWS_AS(volterra_resolve(0.0, std::vector<double>(50, 0.0), g, dt),
                  std::runtime_error);
  std::vector<double> steep(101, 0.0);
  steep[0] = 300.0;
  CHECK_THROWS_AS(volterra_resolve(0.0, steep, g, 0.01), std::runtime_error);
}

TEST_CASE("volterra march: forward-operator roundtrip at machine precision") {
  const double dt = 0.005;
  const int nt = 201;
  std::vector<double> alpha(nt), k1p(nt), g(nt);
  const double k0 = 0.2;
  for (int n = 0; n < nt; ++n) {
    double t = n * dt;
    alpha[n] = std::sin(3 * t) + t * t;
    k1p[n] = -0.3 * std::sin(3 * t);
  }
  for (int n = 0; n < nt; ++n) {
    double hist = 0;
    if (n > 0) {
      hist = 0.5 * k1p[n] * alpha[0] + 0.5 * k1p[0] * alpha[n];
      for (int j = 1; j < n; ++j) hist += k1p[n - j] * alpha[j];
    }
    g[n] = (1 - k0) * alpha[n] - dt * hist;
  }
  auto rec = volterra_resolve(k0, k1p, g, dt);
  double amax = 0, dev = 0;
  for (int n = 0; n < nt; ++n) {
    amax = std::fmax(amax, std::fabs(alpha[n]));
    dev = std::fmax(dev, std::fabs(rec[n] - alpha[n]));
  }
  CHECK(dev <= 1e-12 * amax);
}

TEST_CASE("volterra march: second-order self convergence") {
  auto run = [](int nt) {
    double dt = 1.0 / nt;
    std::vector<double> k1p(nt + 1), g(nt + 1);
    for (int n = 0; n <= nt; ++n) {
      double t = n * dt;
      k1p[n] = -0.1 * 2 * M_PI * std::sin(2 * M_PI * t);
      g[n] = t * t;
    }
    return volterra_resolve(0.1, k1p, g, dt).back();
  };
  double a1 = run(100), a2 = run(200), a3 = run(400);
  double e1 = std::fabs(a1 - a2), e2 = std::fabs(a2 - a3);
  REQUIRE(e2 > 0);
  double order = std::log2(e1 / e2);
  CHECK(order >= 1.9);
  CHECK(order <= 2.6);
}

TEST_CASE("resolvent kernel reproduces the march on zero-start data") {
  const double dt = 0.01;
  const int nt = 151;
  std::vector<double> k1p(nt), g(nt);
  for (int n = 0; n < nt; ++n) {
    double t = n * dt;
    k1p[n] = -0.4 * std::sin(2 * t);
    g[n] = t * t * std::exp(-t);
  }
  auto L = resolvent_kernel(0.15, k1p, dt);
  auto via = convolve_resolvent(L, g);
  auto direct = volterra_resolve(0.15, k1p, g, dt);
  double scale = 0, dev = 0;
  for (int n = 0; n < nt; ++n) {
    scale = std::fmax(scale, std::fabs(direct[n]));
    if ((std::size_t)n < via.size()) dev = std::fmax(dev, std::fabs(via[n] - direct[n]));
  }
  CHECK(dev <= 1e-12 * scale);

  std::vector<double> zero(5, 0.0);
  auto L0 = resolvent_kernel(0.0, zero, dt);
  REQUIRE(L0.size() == 4);
  CHECK(L0[0] == 1.0);
  for (std::size_t k = 1; k < L0.size(); ++k) CHECK(L0[k] == 0.0);
}

TEST_CASE("wave route converges to the separable closed form") {
  // The indicator initial velocity is rough, so the worst pointwise error
  // sits at early times where the under-resolved tail of the spectrum has
  // not decohered; it shrinks first order in h.  Check that ratio plus an
  // absolute ceiling at the finer grid.
  ElasticTensor A2 = ElasticTensor::isotropic(1.0, 1.0);
  Vec3 xi{0, 0, 1};
  std::vector<double> tg;
  for (int k = 0; k <= 100; ++k) tg.push_back(0.005 * k);
  std::vector<double> exact;
  double captured = 0;
  analytic_trace(tg, 99, &exact, &captured);
  double vol2 = 0.125;
  double tail = vol2 - captured;
  REQUIRE(tail >= 0);
  REQUIRE(tail <= 0.02 * vol2);

  auto dev_at = [&](int n) {
    auto geom = example_cell(n);
    auto wave = kernel_wave_oracle(A2, geom, xi, tg);
    REQUIRE(wave.size() == tg.size());
    CHECK(wave[0] == doctest::Approx(geom.vol2).epsilon(1e-12));
    double dev = 0;
    for (std::size_t k = 0; k < tg.size(); ++k)
      dev = std::fmax(dev, std::fabs(wave[k] - exact[k]));
    return dev;
  };
  double d16 = dev_at(16), d32 = dev_at(32);
  CHECK(d16 / d32 >= 1.7);
  CHECK(d32 <= 0.15 * vol2);
}

TEST_CASE("wave route: scaling the tensor by four doubles every frequency") {
  auto geom = example_cell(16);
  ElasticTensor A2 = ElasticTensor::isotropic(1.0, 1.0);
  Vec3 xi{0, 0, 1};
  std::vector<double> tg, tg2;
  for (int k = 0; k <= 60; ++k) {
    tg.push_back(0.008 * k);
    tg2.push_back(0.004 * k);
  }
  auto w1 = kernel_wave_oracle(A2, geom, xi, tg);
  auto w4 = kernel_wave_oracle(A2.scaled(4.0), geom, xi, tg2);
  double dev = 0;
  for (std::size_t k = 0; k < tg.size(); ++k) dev = std::fmax(dev, std::fabs(w4[k] - w1[k]));
  CHECK(dev <= 2e-3 * geom.vol2);
}

TEST_CASE("wave route: slope bound settles under time refinement") {
  auto geom = example_cell(8);
  ElasticTensor A2 = ElasticTensor::isotropic(1.0, 1.0);
  Vec3 xi{0, 0, 1};
  std::vector<double> tg;
  for (int k = 0; k <= 150; ++k) tg.push_back(0.002 * k);
  auto slope = [&](double dtreq) {
    auto w = kernel_wave_oracle(A2, geom, xi, tg, dtreq);
    double m = 0;
    for (std::size_t k = 1; k < w.size(); ++k)
      m = std::fmax(m, std::fabs(w[k] - w[k - 1]) / (tg[k] - tg[k - 1]));
    return m;
  };
  double d1 = slope(0.002), d2 = slope(0.001);
  CHECK(std::fabs(d1 - d2) <= 0.1 * std::fmax(d1, d2));
  CHECK_THROWS_AS(kernel_wave_oracle(A2, geom, xi, tg, 0.2), std::runtime_error);
}

TEST_CASE("series and wave routes differ by the spectral defect at t = 0") {
  auto geom = example_cell(8);
  auto field = axis_field(geom);
  ElasticTensor A2 = ElasticTensor::isotropic(1.0, 1.0);
  ConstrainedForms forms(A2, field, geom);
  auto modes = solve_modes(forms, 27);
  Vec3 xi{0, 0, 1};
  auto kb = kernel_series(modes, forms, xi, 0.5, 0.005);

  for (std::size_t i = 0; i < kb.coupling.size(); ++i) CHECK(std::abs(kb.coupling[i]) <= 1e-14);

  double defect = sum_rule_defect(modes, forms.int_bhat2(), xi, -1);
  auto wave = kernel_wave_oracle(A2, geom, xi, kb.t);
  CHECK(std::abs((wave[0] - kb.kbar1[0]) - defect) <= 1e-10);

  double dev = 0;
  for (std::size_t k = 0; k < kb.t.size(); ++k)
    dev = std::fmax(dev, std::fabs(wave[k] - kb.kbar1[k]));
  CHECK(dev >= defect - 1e-10);       // the static offset never cancels
  CHECK(dev <= defect + 0.1 * geom.vol2);
}
