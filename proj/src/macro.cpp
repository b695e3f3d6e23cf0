#include "memcell/macro.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace memcell {

MacroGrid::MacroGrid(int n_, bool periodic_) {
  if (n_ < 2) throw std::runtime_error("macro grid: need at least two cells per axis");
  n = n_;
  periodic = periodic_;
  hx = 1.0 / n;
  m = periodic ? n : n - 1;
  num_nodes = m * m * m;
}

// ---------------------------------------------------------------- forcing

std::vector<double> div_stress_u0(const MacroGrid& g, const HomogenizedCoefficients& hc,
                                  const VecExpr& u0, Vec3 xi) {
  std::vector<double> out(g.num_nodes, 0.0);
  if (u0.empty()) return out;
  const double d = 2e-3;  // fourth-order stencils balanced against rounding
  static const int offs[4] = {-2, -1, 1, 2};
  static const double wgt[4] = {1.0 / 12.0, -8.0 / 12.0, 8.0 / 12.0, -1.0 / 12.0};

  parallel_for(g.num_nodes, [&](long p) {
    int i = (int)(p / (g.m * g.m)), j = (int)((p / g.m) % g.m), k = (int)(p % g.m);
    Vec3 x = g.node_x(i, j, k);
    double D2[3][3][3];  // d_i d_k u0_l
    for (int di = 0; di < 3; ++di) {
      // pure second derivative in direction di
      Vec3 xp = x, xm = x, xp2 = x, xm2 = x;
      xp.v[di] += d;
      xm.v[di] -= d;
      xp2.v[di] += 2 * d;
      xm2.v[di] -= 2 * d;
      Vec3 c0 = u0.eval(x, 0.0), cp = u0.eval(xp, 0.0), cm = u0.eval(xm, 0.0),
           cp2 = u0.eval(xp2, 0.0), cm2 = u0.eval(xm2, 0.0);
      for (int l = 0; l < 3; ++l)
        D2[di][di][l] =
            (-cp2[l] + 16 * cp[l] - 30 * c0[l] + 16 * cm[l] - cm2[l]) / (12 * d * d);
      for (int dk = di + 1; dk < 3; ++dk) {
        double acc[3] = {0, 0, 0};
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) {
            Vec3 xx = x;
            xx.v[di] += offs[a] * d;
            xx.v[dk] += offs[b] * d;
            Vec3 val = u0.eval(xx, 0.0);
            for (int l = 0; l < 3; ++l) acc[l] += wgt[a] * wgt[b] * val[l];
          }
        for (int l = 0; l < 3; ++l) {
          D2[di][dk][l] = acc[l] / (d * d);
          D2[dk][di][l] = D2[di][dk][l];
        }
      }
    }
    double div = 0;
    for (int di = 0; di < 3; ++di) {
      Mat3 Ei{};
      for (int a = 0; a < 3; ++a)
        for (int l = 0; l < 3; ++l) Ei.m[a][l] = 0.5 * (D2[di][a][l] + D2[di][l][a]);
      Mandel6 ev = to_mandel(Ei), sv{};
      for (int a = 0; a < 6; ++a) {
        double acc = 0;
        for (int b = 0; b < 6; ++b) acc += hc.A1star[a * 6 + b] * ev[b];
        sv[a] = acc;
      }
      Mat3 sig = from_mandel(sv);
      for (int jj = 0; jj < 3; ++jj) div += sig.m[di][jj] * xi[jj];
    }
    out[p] = div;
  });
  return out;
}

static void forcing_core(const MacroGrid& g, const KernelBundle& kb, int cap,
                         const std::vector<std::vector<double>>& hv,
                         const std::vector<double>& divterm, const std::vector<Vec3>* fnow,
                         const std::vector<std::vector<double>>& kreg, double t,
                         std::vector<double>& out) {
  out.assign(g.num_nodes, 0.0);
  if (!divterm.empty())
    for (int p = 0; p < g.num_nodes; ++p) out[p] = divterm[p];
  for (int i = 0; i < cap; ++i) {
    double mu = kb.mu[i], s = std::sin(mu * t), hx = kb.hx[i], c = kb.coupling[i];
    if (!hv.empty()) {
      double w1 = mu * s * hx - (s / mu) * c;
      const std::vector<double>& hvi = hv[i];
      for (int p = 0; p < g.num_nodes; ++p) out[p] += w1 * hvi[p];
    }
    if (fnow) {
      Vec3 hb = kb.hbar[i];
      const std::vector<Vec3>& fn = *fnow;
      for (int p = 0; p < g.num_nodes; ++p) out[p] -= hx * dot(hb, fn[p]);
    }
    if (!kreg.empty()) {
      double w2 = hx * mu * mu - c;
      const std::vector<double>& ki = kreg[i];
      for (int p = 0; p < g.num_nodes; ++p) out[p] += w2 * ki[p];
    }
  }
}

std::vector<double> assemble_forcing_F(const MacroGrid& g, const HomogenizedCoefficients& hc,
                                       const KernelBundle& kb, int modes_cap, const MacroData& data,
                                       double t, const std::vector<std::vector<double>>& kreg) {
  int cap = modes_cap < 0 ? (int)kb.mu.size() : std::min<int>(modes_cap, (int)kb.mu.size());
  std::vector<std::vector<double>> hv;
  if (!data.v0.empty()) {
    hv.assign(cap, std::vector<double>(g.num_nodes));
    for (int p = 0; p < g.num_nodes; ++p) {
      int i = p / (g.m * g.m), j = (p / g.m) % g.m, k = p % g.m;
      Vec3 v = data.v0.eval(g.node_x(i, j, k), 0.0);
      for (int q = 0; q < cap; ++q) hv[q][p] = dot(kb.hbar[q], v);
    }
  }
  std::vector<double> divterm;
  if (!data.u0.empty()) divterm = div_stress_u0(g, hc, data.u0, hc.xi);
  std::vector<Vec3> fnow;
  bool has_f = !data.f.empty();
  if (has_f) {
    fnow.resize(g.num_nodes);
    for (int p = 0; p < g.num_nodes; ++p) {
      int i = p / (g.m * g.m), j = (p / g.m) % g.m, k = p % g.m;
      fnow[p] = data.f.eval(g.node_x(i, j, k), t);
    }
  }
  std::vector<double> out;
  forcing_core(g, kb, cap, hv, divterm, has_f ? &fnow : nullptr, kreg, t, out);
  return out;
}

// ---------------------------------------------------------------- solver

MacroSolver::MacroSolver(const HomogenizedCoefficients& hc, const KernelBundle& kb,
                         const MacroData& data, const MacroOptions& opt)
    : hc_(hc), kb_(kb), data_(data), grid_(opt.n, opt.periodic) {
  cap_ = opt.modes_cap < 0 ? (int)kb_.mu.size() : std::min<int>(opt.modes_cap, (int)kb_.mu.size());
  guard_ = opt.growth_guard;
  has_f_ = !data_.f.empty();
  has_v0_ = !data_.v0.empty();
  has_u0_ = !data_.u0.empty();

  double sum_a = 0;
  for (int i = 0; i < cap_; ++i) sum_a += kb_.weight[i];
  double c_lb = hc_.Mstar - sum_a;
  if (c_lb <= 0)
    throw std::runtime_error("macro: retained spectral weight exceeds the effective mass");

  double s1 = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s1 += std::abs(hc_.A1dir.m[i][j]);
  if (opt.dt > 0) {
    dt_ = opt.dt;
  } else {
    dt_ = 0.35 * grid_.hx * std::sqrt(c_lb / std::max(s1, 1e-30));
    if (hc_.cstar > 0) dt_ = std::min(dt_, 0.5 * std::sqrt(c_lb / hc_.cstar));
  }
  if (opt.snap_interval > 0) {
    int ksnap = (int)std::ceil(opt.snap_interval / dt_ - 1e-9);
    dt_ = opt.snap_interval / std::max(ksnap, 1);
  }

  C_ = hc_.Mstar;
  cosd_.resize(cap_);
  sind_.resize(cap_);
  for (int i = 0; i < cap_; ++i) {
    double th = kb_.mu[i] * dt_;
    cosd_[i] = std::cos(th);
    sind_[i] = std::sin(th);
    C_ -= kb_.weight[i] * sind_[i] / th;
  }
  if (C_ <= 0) throw std::runtime_error("macro: memory bracket lost positivity at this time step");

  int nn = grid_.num_nodes;
  alpha_.assign(nn, 0.0);
  alpha_prev_.assign(nn, 0.0);
  alpha_prev2_.assign(nn, 0.0);
  w_.assign(nn, 0.0);
  w_prev_.assign(nn, 0.0);
  r_.assign(cap_, std::vector<double>(nn, 0.0));
  z_.assign(cap_, std::vector<double>(nn, 0.0));
  if (has_f_) {
    kreg_.assign(cap_, std::vector<double>(nn, 0.0));
    kdot_.assign(cap_, std::vector<double>(nn, 0.0));
    fnow_.resize(nn);
  }

  u0n_.assign(nn, Vec3{});
  v0n_.assign(nn, Vec3{});
  for (int p = 0; p < nn; ++p) {
    int i = p / (grid_.m * grid_.m), j = (p / grid_.m) % grid_.m, k = p % grid_.m;
    Vec3 x = grid_.node_x(i, j, k);
    if (has_u0_) u0n_[p] = data_.u0.eval(x, 0.0);
    if (has_v0_) v0n_[p] = data_.v0.eval(x, 0.0);
  }
  if (has_v0_) {
    hv_.assign(cap_, std::vector<double>(nn));
    for (int q = 0; q < cap_; ++q)
      for (int p = 0; p < nn; ++p) hv_[q][p] = dot(kb_.hbar[q], v0n_[p]);
  }
  if (has_u0_) divterm_ = div_stress_u0(grid_, hc_, data_.u0, hc_.xi);

  startup();
}

void MacroSolver::forcing(double t, std::vector<double>& out) const {
  if (has_f_) {
    for (int p = 0; p < grid_.num_nodes; ++p) {
      int i = p / (grid_.m * grid_.m), j = (p / grid_.m) % grid_.m, k = p % grid_.m;
      fnow_[p] = data_.f.eval(grid_.node_x(i, j, k), t);
    }
  }
  forcing_core(grid_, kb_, cap_, hv_, divterm_, has_f_ ? &fnow_ : nullptr, kreg_, t, out);
}

void MacroSolver::eval_G(double t, const std::vector<double>& a, const std::vector<double>& vt,
                         std::vector<double>& out) const {
  forcing(t, out);  // leaves fnow_ at time t when a forcing term is present

  int m = grid_.m;
  double h = grid_.hx, h2 = h * h;
  bool per = grid_.periodic;
  const Mat3& A = hc_.A1dir;
  Vec3 lam = hc_.lambdastar, mus = hc_.mustar;
  double cst = hc_.cstar;
  bool lorder = norm(lam) > 0;

  auto fetch = [&](const std::vector<double>& f, int i, int j, int k) -> double {
    if (per) {
      i = (i % m + m) % m;
      j = (j % m + m) % m;
      k = (k % m + m) % m;
      return f[(i * m + j) * m + k];
    }
    if (i < 0 || j < 0 || k < 0 || i >= m || j >= m || k >= m) return 0.0;
    return f[(i * m + j) * m + k];
  };

  parallel_for(grid_.num_nodes, [&](long p) {
    int i = (int)(p / (m * m)), j = (int)((p / m) % m), k = (int)(p % m);
    double c = a[p];
    double lap = A.m[0][0] * (fetch(a, i + 1, j, k) - 2 * c + fetch(a, i - 1, j, k));
    lap += A.m[1][1] * (fetch(a, i, j + 1, k) - 2 * c + fetch(a, i, j - 1, k));
    lap += A.m[2][2] * (fetch(a, i, j, k + 1) - 2 * c + fetch(a, i, j, k - 1));
    lap += 2 * A.m[0][1] * 0.25 *
           (fetch(a, i + 1, j + 1, k) - fetch(a, i + 1, j - 1, k) - fetch(a, i - 1, j + 1, k) +
            fetch(a, i - 1, j - 1, k));
    lap += 2 * A.m[0][2] * 0.25 *
           (fetch(a, i + 1, j, k + 1) - fetch(a, i + 1, j, k - 1) - fetch(a, i - 1, j, k + 1) +
            fetch(a, i - 1, j, k - 1));
    lap += 2 * A.m[1][2] * 0.25 *
           (fetch(a, i, j + 1, k + 1) - fetch(a, i, j + 1, k - 1) - fetch(a, i, j - 1, k + 1) +
            fetch(a, i, j - 1, k - 1));
    double val = out[p] + lap / h2 - cst * c;
    if (lorder) {
      double gv = lam[0] * (fetch(vt, i + 1, j, k) - fetch(vt, i - 1, j, k)) +
                  lam[1] * (fetch(vt, i, j + 1, k) - fetch(vt, i, j - 1, k)) +
                  lam[2] * (fetch(vt, i, j, k + 1) - fetch(vt, i, j, k - 1));
      val -= gv / (2 * h);
    }
    if (has_f_) val += dot(mus, fnow_[p]);
    out[p] = val;
  });

  for (int q = 0; q < cap_; ++q) {
    double w = kb_.coupling[q] * kb_.hx[q];
    if (w == 0) continue;
    const std::vector<double>& rq = r_[q];
    for (int p = 0; p < grid_.num_nodes; ++p) out[p] += w * rq[p];
  }
}

void MacroSolver::update_registers() {
  int nn = grid_.num_nodes;
  double fmid_t = time_ + 0.5 * dt_;  // time_ not yet advanced past this step
  if (has_f_) {
    for (int p = 0; p < nn; ++p) {
      int i = p / (grid_.m * grid_.m), j = (p / grid_.m) % grid_.m, k = p % grid_.m;
      fnow_[p] = data_.f.eval(grid_.node_x(i, j, k), fmid_t);
    }
  }
  std::vector<double> beta(nn);
  for (int p = 0; p < nn; ++p) beta[p] = (alpha_[p] - alpha_prev_[p]) / dt_;
  for (int q = 0; q < cap_; ++q) {
    double mu = kb_.mu[q], cd = cosd_[q], sd = sind_[q];
    std::vector<double>& rq = r_[q];
    std::vector<double>& zq = z_[q];
    for (int p = 0; p < nn; ++p) {
      double rn = cd * rq[p] - sd * zq[p] + (sd / mu) * beta[p];
      double zn = sd * rq[p] + cd * zq[p] + ((1 - cd) / mu) * beta[p];
      rq[p] = rn;
      zq[p] = zn;
    }
    if (has_f_) {
      Vec3 hb = kb_.hbar[q];
      std::vector<double>& kq = kreg_[q];
      std::vector<double>& kd = kdot_[q];
      for (int p = 0; p < nn; ++p) {
        double fb = dot(hb, fnow_[p]);
        double kn = cd * kq[p] + (sd / mu) * kd[p] + ((1 - cd) / (mu * mu)) * fb;
        double kdn = -mu * sd * kq[p] + cd * kd[p] + (sd / mu) * fb;
        kq[p] = kn;
        kd[p] = kdn;
      }
    }
  }
}

void MacroSolver::startup() {
  int nn = grid_.num_nodes;
  double sum_a = 0;
  for (int i = 0; i < cap_; ++i) sum_a += kb_.weight[i];
  double c0 = hc_.Mstar - sum_a;

  std::vector<double> g0, zero(nn, 0.0);
  eval_G(0.0, zero, zero, g0);

  for (int p = 0; p < nn; ++p) {
    alpha_prev_[p] = 0.0;
    alpha_[p] = data_.alpha_dot0 * dt_ + 0.5 * dt_ * dt_ * g0[p] / c0;
  }
  update_registers();
  for (int p = 0; p < nn; ++p) {
    double acc = hc_.Mstar * alpha_[p];
    for (int q = 0; q < cap_; ++q) acc -= kb_.weight[q] * r_[q][p];
    w_prev_[p] = 0.0;
    w_[p] = acc;
  }
  time_ = dt_;
  step_ = 1;
  base_ = std::max(max_abs_alpha(), 1e-300);
}

void MacroSolver::step() {
  int nn = grid_.num_nodes;
  std::vector<double> vt(nn);
  if (step_ >= 2) {
    for (int p = 0; p < nn; ++p)
      vt[p] = (3 * alpha_[p] - 4 * alpha_prev_[p] + alpha_prev2_[p]) / (2 * dt_);
  } else {
    for (int p = 0; p < nn; ++p) vt[p] = (alpha_[p] - alpha_prev_[p]) / dt_;
  }

  std::vector<double> g;
  eval_G(time_, alpha_, vt, g);

  std::vector<double> rhs(nn);
  for (int p = 0; p < nn; ++p) rhs[p] = 2 * w_[p] - w_prev_[p] + dt_ * dt_ * g[p];
  for (int q = 0; q < cap_; ++q) {
    double aq = kb_.weight[q], cd = cosd_[q], sd = sind_[q], snc = sind_[q] / (kb_.mu[q] * dt_);
    const std::vector<double>& rq = r_[q];
    const std::vector<double>& zq = z_[q];
    for (int p = 0; p < nn; ++p) rhs[p] += aq * (cd * rq[p] - sd * zq[p] - snc * alpha_[p]);
  }
  std::vector<double> anew(nn);
  for (int p = 0; p < nn; ++p) anew[p] = rhs[p] / C_;

  alpha_prev2_.swap(alpha_prev_);
  alpha_prev_.swap(alpha_);
  alpha_.swap(anew);

  update_registers();

  w_prev_.swap(w_);
  for (int p = 0; p < nn; ++p) w_[p] = hc_.Mstar * alpha_[p];
  for (int q = 0; q < cap_; ++q) {
    double aq = kb_.weight[q];
    const std::vector<double>& rq = r_[q];
    for (int p = 0; p < nn; ++p) w_[p] -= aq * rq[p];
  }

  time_ += dt_;
  ++step_;

  double mx = max_abs_alpha();
  if (!std::isfinite(mx)) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "macro: solution lost finiteness at step %d (t=%.6g)", step_,
                  time_);
    throw std::runtime_error(buf);
  }
  if (step_ <= 10) base_ = std::max(base_, mx);
  // floor the baseline at unit scale: a run started from rest under slowly
  // ramping forcing grows from ~0 legitimately, and only absolute blow-up
  // past guard_ signals a bad step there
  else if (mx > guard_ * std::max(base_, 1.0)) {
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "macro: field norm grew %.3g-fold by step %d (t=%.6g); unstable time step",
                  mx / std::max(base_, 1.0), step_, time_);
    throw std::runtime_error(buf);
  }
}

void MacroSolver::advance_to(double T) {
  while (time_ < T - 0.5 * dt_) step();
}

double MacroSolver::mean_alpha() const {
  return chunked_sum(alpha_.data(), (std::int64_t)alpha_.size()) / grid_.num_nodes;
}

double MacroSolver::max_abs_alpha() const {
  double mx = 0;
  for (double v : alpha_) mx = std::max(mx, std::abs(v));
  return mx;
}

double MacroSolver::interp(const std::vector<double>& fld, Vec3 x) const {
  int m = grid_.m;
  double o = grid_.periodic ? 0.0 : 1.0;
  double u = x[0] / grid_.hx - o, v = x[1] / grid_.hx - o, w = x[2] / grid_.hx - o;
  int i0 = (int)std::floor(u), j0 = (int)std::floor(v), k0 = (int)std::floor(w);
  double fu = u - i0, fv = v - j0, fw = w - k0;
  auto fetch = [&](int i, int j, int k) -> double {
    if (grid_.periodic) {
      i = (i % m + m) % m;
      j = (j % m + m) % m;
      k = (k % m + m) % m;
      return fld[(i * m + j) * m + k];
    }
    if (i < 0 || j < 0 || k < 0 || i >= m || j >= m || k >= m) return 0.0;
    return fld[(i * m + j) * m + k];
  };
  double acc = 0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b)
      for (int c = 0; c < 2; ++c)
        acc += (a ? fu : 1 - fu) * (b ? fv : 1 - fv) * (c ? fw : 1 - fw) *
               fetch(i0 + a, j0 + b, k0 + c);
  return acc;
}

double MacroSolver::alpha_at(Vec3 x) const { return interp(alpha_, x); }

MacroSolver::Limits MacroSolver::reconstruct(bool want_ubar) const {
  int nn = grid_.num_nodes;
  Limits lim;
  lim.u1.resize(nn);
  lim.u2avg.resize(nn);
  lim.sigma.resize(nn);
  Vec3 xi = hc_.xi;
  Vec3 p2xi = hc_.proj2 * xi;

  std::vector<double> sweight(cap_);
  for (int q = 0; q < cap_; ++q) sweight[q] = std::sin(kb_.mu[q] * time_) / kb_.mu[q];

  for (int p = 0; p < nn; ++p) {
    lim.u1[p] = u0n_[p] + alpha_[p] * xi;
    Vec3 acc{};
    for (int q = 0; q < cap_; ++q) {
      double coef = 0;
      if (has_v0_) coef += sweight[q] * hv_[q][p];
      if (has_f_) coef += kreg_[q][p];
      coef -= kb_.hx[q] * r_[q][p];
      acc = acc + coef * kb_.hbar[q];
    }
    lim.u2avg[p] = acc - alpha_[p] * p2xi;
  }

  int m = grid_.m;
  auto fetch = [&](int i, int j, int k) -> double {
    if (grid_.periodic) {
      i = (i % m + m) % m;
      j = (j % m + m) % m;
      k = (k % m + m) % m;
      return alpha_[(i * m + j) * m + k];
    }
    if (i < 0 || j < 0 || k < 0 || i >= m || j >= m || k >= m) return 0.0;
    return alpha_[(i * m + j) * m + k];
  };
  for (int p = 0; p < nn; ++p) {
    int i = p / (m * m), j = (p / m) % m, k = p % m;
    Vec3 gr{(fetch(i + 1, j, k) - fetch(i - 1, j, k)) / (2 * grid_.hx),
            (fetch(i, j + 1, k) - fetch(i, j - 1, k)) / (2 * grid_.hx),
            (fetch(i, j, k + 1) - fetch(i, j, k - 1)) / (2 * grid_.hx)};
    lim.sigma[p] = hc_.A1dir * gr;
  }

  if (want_ubar) {
    if (!hc_.fixed_direction)
      throw std::runtime_error(
          "ubar reconstruction is only available for the constant-direction field reduction");
    lim.ubar.resize(nn);
    for (int p = 0; p < nn; ++p) lim.ubar[p] = dot(lim.u1[p], xi) + dot(lim.u2avg[p], xi);
  }
  return lim;
}

Vec3 MacroSolver::u1_at(Vec3 x) const {
  Vec3 u = data_.u0.empty() ? Vec3{} : data_.u0.eval(x, 0.0);
  return u + alpha_at(x) * hc_.xi;
}

Vec3 MacroSolver::u2avg_at(Vec3 x) const {
  Vec3 acc{};
  for (int q = 0; q < cap_; ++q) {
    double coef = 0;
    if (has_v0_) coef += std::sin(kb_.mu[q] * time_) / kb_.mu[q] * interp(hv_[q], x);
    if (has_f_) coef += interp(kreg_[q], x);
    coef -= kb_.hx[q] * interp(r_[q], x);
    acc = acc + coef * kb_.hbar[q];
  }
  return acc - alpha_at(x) * (hc_.proj2 * hc_.xi);
}

std::vector<double> single_mode_dense_reference(double Mstar, double cstar, double mu, double a,
                                                double c_times_hx, double alpha_dot0,
                                                const std::function<double(double)>& rhs, double T,
                                                int nt, int substeps) {
  if (Mstar - a <= 0) throw std::runtime_error("reference: spectral weight exceeds mass");
  double y[4] = {0.0, (Mstar - a) * alpha_dot0, 0.0, 0.0};  // alpha, d/dt bracket, r, z
  auto deriv = [&](double t, const double* s, double* d) {
    double ad = (s[1] - a * mu * s[3]) / (Mstar - a);
    d[0] = ad;
    d[1] = -cstar * s[0] + c_times_hx * s[2] + rhs(t);
    d[2] = ad - mu * s[3];
    d[3] = mu * s[2];
  };
  std::vector<double> out(nt + 1);
  out[0] = 0.0;
  double dts = T / nt / substeps, t = 0;
  for (int k = 1; k <= nt; ++k) {
    for (int s = 0; s < substeps; ++s) {
      double k1[4], k2[4], k3[4], k4[4], tmp[4];
      deriv(t, y, k1);
      for (int q = 0; q < 4; ++q) tmp[q] = y[q] + 0.5 * dts * k1[q];
      deriv(t + 0.5 * dts, tmp, k2);
      for (int q = 0; q < 4; ++q) tmp[q] = y[q] + 0.5 * dts * k2[q];
      deriv(t + 0.5 * dts, tmp, k3);
      for (int q = 0; q < 4; ++q) tmp[q] = y[q] + dts * k3[q];
      deriv(t + dts, tmp, k4);
      for (int q = 0; q < 4; ++q) y[q] += dts / 6 * (k1[q] + 2 * k2[q] + 2 * k3[q] + k4[q]);
      t += dts;
    }
    out[k] = y[0];
  }
  return out;
}

}  // namespace memcell
