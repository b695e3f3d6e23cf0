#include "memcell/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "memcell/grid.hpp"

namespace memcell {

double KernelBundle::kbar1_at(double time) const {
  double acc = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) acc += std::cos(mu[i] * time) * weight[i];
  return acc;
}

double KernelBundle::kbar1_prime_at(double time) const {
  double acc = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) acc -= mu[i] * std::sin(mu[i] * time) * weight[i];
  return acc;
}

static std::vector<double> uniform_grid(double T, double dt, double* dt_out) {
  if (dt <= 0 || T < 0) throw std::runtime_error("kernel: need dt > 0 and T >= 0");
  int nt = (int)std::lround(T / dt);
  if (nt < 1) nt = 1;
  double d = T / nt;
  std::vector<double> t(nt + 1);
  for (int k = 0; k <= nt; ++k) t[k] = k * d;
  *dt_out = d;
  return t;
}

static void fill_samples(KernelBundle& kb) {
  std::size_t nt = kb.t.size(), nm = kb.mu.size();
  kb.kbar1.assign(nt, 0.0);
  kb.kbarbar.assign(nt, Mat3{});
  for (std::size_t k = 0; k < nt; ++k) {
    double tk = kb.t[k];
    double acc = 0;
    Mat3 m{};
    for (std::size_t i = 0; i < nm; ++i) {
      acc += std::cos(kb.mu[i] * tk) * kb.weight[i];
      double s = std::sin(kb.mu[i] * tk) / kb.mu[i];
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) m.m[a][b] += s * kb.hbar[i][a] * kb.hbar[i][b];
    }
    kb.kbar1[k] = acc;
    kb.kbarbar[k] = m;
  }
}

KernelBundle kernel_series(const ModeSet& modes, const ConstrainedForms& forms, Vec3 xi, double T,
                           double dt) {
  KernelBundle kb;
  kb.T = T;
  kb.t = uniform_grid(T, dt, &kb.dt);
  kb.mu = modes.mu;
  kb.hbar = modes.hbar;
  kb.fingerprint = modes.fingerprint;
  std::size_t nm = modes.mu.size();
  kb.hx.resize(nm);
  kb.weight.resize(nm);
  kb.coupling.resize(nm);
  for (std::size_t i = 0; i < nm; ++i) {
    kb.hx[i] = dot(modes.hbar[i], xi);
    kb.weight[i] = kb.hx[i] * kb.hx[i];
    kb.coupling[i] = forms.coupling_c(modes.s[i].data());
  }
  fill_samples(kb);
  return kb;
}

KernelBundle kernel_series_modal(const std::vector<double>& mu, const std::vector<Vec3>& hbar,
                                 const std::vector<double>& coupling, Vec3 xi, double T,
                                 double dt) {
  if (mu.size() != hbar.size()) throw std::runtime_error("kernel: mu/hbar size mismatch");
  KernelBundle kb;
  kb.T = T;
  kb.t = uniform_grid(T, dt, &kb.dt);
  kb.mu = mu;
  kb.hbar = hbar;
  std::size_t nm = mu.size();
  kb.hx.resize(nm);
  kb.weight.resize(nm);
  kb.coupling.assign(nm, 0.0);
  for (std::size_t i = 0; i < nm; ++i) {
    if (mu[i] <= 0) throw std::runtime_error("kernel: nonpositive frequency");
    kb.hx[i] = dot(hbar[i], xi);
    kb.weight[i] = kb.hx[i] * kb.hx[i];
    if (i < coupling.size()) kb.coupling[i] = coupling[i];
  }
  fill_samples(kb);
  return kb;
}

KernelBundle kernel_series_synthetic(const std::vector<double>& mu, const std::vector<double>& hx,
                                     const std::vector<double>& coupling, double T, double dt) {
  if (mu.size() != hx.size()) throw std::runtime_error("kernel: mu/hx size mismatch");
  std::vector<Vec3> hbar(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i)
    hbar[i] = Vec3{0, 0, hx[i]};  // stand-in direction carrying the trace
  return kernel_series_modal(mu, hbar, coupling, Vec3{0, 0, 1}, T, dt);
}

std::vector<double> kernel_wave_oracle(const ElasticTensor& A2, const CellGeometry& geom, Vec3 xi,
                                       const std::vector<double>& t_grid, double dt_request) {
  if (t_grid.empty()) throw std::runtime_error("wave oracle: empty sample grid");
  if (std::abs(t_grid[0]) > 1e-15) throw std::runtime_error("wave oracle: grid must start at 0");
  for (std::size_t k = 1; k < t_grid.size(); ++k)
    if (t_grid[k] <= t_grid[k - 1]) throw std::runtime_error("wave oracle: grid not increasing");

  const ElementMesh& mesh = geom.mesh;
  double h = mesh.h;

  // scalar unknown on nodes strictly inside the inclusion, zero elsewhere
  std::vector<int> dof((std::size_t)mesh.num_nodes(), -1);
  std::vector<std::int64_t> dof_node;
  for (std::int64_t i = 0; i < mesh.num_nodes(); ++i)
    if (geom.node_interior2[(std::size_t)i]) {
      dof[(std::size_t)i] = (int)dof_node.size();
      dof_node.push_back(i);
    }
  int n = (int)dof_node.size();
  if (n == 0) throw std::runtime_error("wave oracle: inclusion has no interior nodes");

  Mat3 Ahat = A2.directional(xi);
  std::array<double, 64> Se = scalar_element_stiffness(Ahat, h);

  // gather (element, node indices) once; all dofs carry lumped mass h^3
  std::vector<std::array<int, 8>> enodes(geom.soft_elems.size());
  for (std::size_t e = 0; e < geom.soft_elems.size(); ++e) {
    int ex, ey, ez;
    mesh.elem_coords(geom.soft_elems[e], ex, ey, ez);
    std::int64_t nodes[8];
    mesh.elem_nodes(ex, ey, ez, nodes);
    for (int a = 0; a < 8; ++a) enodes[e][a] = (int)nodes[a];
  }

  auto apply_S = [&](const std::vector<double>& u, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t e = 0; e < enodes.size(); ++e) {
      double loc[8];
      for (int a = 0; a < 8; ++a) {
        int d = dof[enodes[e][a]];
        loc[a] = d >= 0 ? u[d] : 0.0;
      }
      for (int a = 0; a < 8; ++a) {
        int d = dof[enodes[e][a]];
        if (d < 0) continue;
        double acc = 0;
        for (int b = 0; b < 8; ++b) acc += Se[a * 8 + b] * loc[b];
        out[d] += acc;
      }
    }
  };

  double mass = h * h * h;

  // largest generalized eigenvalue of (1/m) S by power iteration
  std::vector<double> pv(n), pw(n);
  for (int i = 0; i < n; ++i) pv[i] = 1.0 + 0.5 * std::sin(1.0 + i);
  double lam = 0;
  for (int it = 0; it < 80; ++it) {
    apply_S(pv, pw);
    double num = 0, den = 0, nrm = 0;
    for (int i = 0; i < n; ++i) {
      pw[i] /= mass;
      num += pv[i] * pw[i];
      den += pv[i] * pv[i];
      nrm += pw[i] * pw[i];
    }
    lam = num / den;
    nrm = std::sqrt(nrm);
    if (nrm == 0) throw std::runtime_error("wave oracle: stiffness annihilated the probe");
    for (int i = 0; i < n; ++i) pv[i] = pw[i] / nrm;
  }
  double dt_stable = 2.0 / std::sqrt(lam * 1.02);  // small margin on the estimate
  double dt_use = 0.9 * dt_stable;
  if (dt_request > 0) {
    if (dt_request > dt_stable) {
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "wave oracle: dt %.6g exceeds the stability bound; stable dt = %.6g",
                    dt_request, dt_stable);
      throw std::runtime_error(buf);
    }
    dt_use = dt_request;
  }

  // velocity Verlet on (u, v); v(0) = 1, u(0) = 0
  std::vector<double> u(n, 0.0), v(n, 1.0), acc(n, 0.0);
  std::vector<double> out(t_grid.size(), 0.0);
  out[0] = geom.vol2;  // quadrature of the exact unit initial velocity

  apply_S(u, acc);
  double cur = t_grid[0];
  for (std::size_t k = 1; k < t_grid.size(); ++k) {
    double span = t_grid[k] - cur;
    int steps = (int)std::ceil(span / dt_use - 1e-12);
    if (steps < 1) steps = 1;
    double dt = span / steps;
    for (int s = 0; s < steps; ++s) {
      for (int i = 0; i < n; ++i) v[i] -= 0.5 * dt * acc[i] / mass;
      for (int i = 0; i < n; ++i) u[i] += dt * v[i];
      apply_S(u, acc);
      for (int i = 0; i < n; ++i) v[i] -= 0.5 * dt * acc[i] / mass;
    }
    cur = t_grid[k];
    double tot = 0;
    for (int i = 0; i < n; ++i) tot += v[i];
    out[k] = mass * tot;
  }
  return out;
}

std::vector<double> volterra_resolve(double k1_0, const std::vector<double>& k1p,
                                     const std::vector<double>& g, double dt) {
  if (dt <= 0) throw std::runtime_error("volterra: dt must be positive");
  if (k1p.size() < g.size()) throw std::runtime_error("volterra: kernel samples shorter than data");
  double c0 = 1.0 - k1_0;
  if (c0 <= 0) throw std::runtime_error("volterra: nonpositive second-kind coefficient 1 - K(0)");
  std::size_t nt = g.size();
  std::vector<double> a(nt, 0.0);
  if (nt == 0) return a;
  a[0] = g[0] / c0;
  double den = c0 - 0.5 * dt * k1p[0];
  if (den <= 0) throw std::runtime_error("volterra: time step too large for the kernel slope");
  for (std::size_t n = 1; n < nt; ++n) {
    double hist = 0.5 * k1p[n] * a[0];
    for (std::size_t j = 1; j < n; ++j) hist += k1p[n - j] * a[j];
    a[n] = (g[n] + dt * hist) / den;
  }
  return a;
}

std::vector<double> resolvent_kernel(double k1_0, const std::vector<double>& k1p, double dt) {
  // impulse at index 1; responses to later impulses are shifts of this one
  // because the half-weight of the trapezoid rule only touches index 0.
  std::size_t nt = k1p.size();
  if (nt < 2) return {1.0 / (1.0 - k1_0)};
  std::vector<double> g(nt, 0.0);
  g[1] = 1.0;
  std::vector<double> a = volterra_resolve(k1_0, k1p, g, dt);
  std::vector<double> L(nt - 1);
  for (std::size_t k = 0; k + 1 < nt; ++k) L[k] = a[k + 1];
  return L;
}

std::vector<double> convolve_resolvent(const std::vector<double>& L, const std::vector<double>& g) {
  std::vector<double> out(g.size(), 0.0);
  for (std::size_t n = 0; n < g.size(); ++n) {
    double acc = 0;
    for (std::size_t j = 0; j <= n; ++j) {
      std::size_t lag = n - j;
      if (lag < L.size()) acc += L[lag] * g[j];
    }
    out[n] = acc;
  }
  return out;
}

}  // namespace memcell
