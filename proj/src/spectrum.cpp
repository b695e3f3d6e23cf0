#include "memcell/spectrum.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace memcell {

namespace {

// CGS2: twice-iterated classical Gram-Schmidt of w against the basis in the
// M-inner product, then M-normalization.  Returns the final M-norm (before
// normalizing); near-zero signals a dependent direction.
double orthonormalize(const ConstrainedForms& forms, const std::vector<std::vector<double>>& basis,
                      std::vector<double>& w, std::vector<double>& scratch) {
  std::int64_t n = (std::int64_t)w.size();
  for (int pass = 0; pass < 2; ++pass) {
    forms.applyM(w.data(), scratch.data());
    for (const auto& x : basis) {
      double c = chunked_dot(x.data(), scratch.data(), n);
      // classical GS: all coefficients against the image of the incoming w;
      // the second pass cleans the rounding residue
      parallel_for(n, [&](std::int64_t i) { w[i] -= c * x[i]; });
    }
  }
  forms.applyM(w.data(), scratch.data());
  double nrm = std::sqrt(std::fmax(chunked_dot(w.data(), scratch.data(), n), 0.0));
  if (nrm > 0) parallel_for(n, [&](std::int64_t i) { w[i] /= nrm; });
  return nrm;
}

}  // namespace

ModeSet solve_modes(const ConstrainedForms& forms, int count, std::uint64_t fingerprint,
                    SolveModesOptions opt) {
  std::int64_t n = forms.ndof();
  if (n == 0) throw std::runtime_error("no interior unknowns on the inclusion");
  if (count < 1) throw std::runtime_error("mode count must be >= 1");
  int N = (int)std::min<std::int64_t>(count, n);
  int p = (int)std::min<std::int64_t>(8, n);  // expansion block
  int max_basis = opt.max_basis > 0 ? opt.max_basis
                                    : (int)std::min<std::int64_t>(n, std::max(4 * N + 64, 256));

  std::vector<std::vector<double>> X;   // M-orthonormal basis
  std::vector<std::vector<double>> MY;  // M * (S^{-1} M x_k) per basis column
  std::vector<double> scratch((std::size_t)n), rhs((std::size_t)n), y((std::size_t)n);
  Lcg rng(0x9277a16db65ef301ull);

  auto expand_random = [&]() {
    std::vector<double> w((std::size_t)n);
    for (int tries = 0; tries < 32; ++tries) {
      for (std::int64_t i = 0; i < n; ++i) w[i] = rng.uniform();
      if (orthonormalize(forms, X, w, scratch) > 1e-10) {
        X.push_back(w);
        return true;
      }
    }
    return false;
  };

  for (int c = 0; c < p && (std::int64_t)X.size() < n; ++c)
    if (!expand_random()) throw std::runtime_error("eigensolver: cannot seed the subspace");

  // OP images of the first block
  auto apply_op = [&](const std::vector<double>& x) {
    forms.applyM(x.data(), rhs.data());
    std::vector<double> sol;
    cg_solve([&](const double* u, double* out) { forms.applyS(u, out); },
             rhs, sol, forms.diagS(), no_projection(), {opt.cg_tol, 50000});
    return sol;
  };

  ModeSet out;
  out.fingerprint = fingerprint;
  std::vector<std::vector<double>> images;  // S^{-1} M x_k, aligned with X

  int next_rr = std::max({2 * p, N + std::max(8, N / 4), 16});
  int converged_prev = -1;
  for (int round = 0;; ++round) {
    // complete images for all basis columns
    while (images.size() < X.size()) {
      std::vector<double> img = apply_op(X[images.size()]);
      forms.applyM(img.data(), scratch.data());
      MY.push_back(scratch);
      images.push_back(std::move(img));
    }

    bool spanned = (std::int64_t)X.size() >= n;
    if ((int)X.size() >= next_rr || spanned || (int)X.size() >= max_basis) {
      // Rayleigh-Ritz: T_ij = <x_i, OP x_j>_M
      int K = (int)X.size();
      Eigen::MatrixXd T(K, K);
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < K; ++j) T(i, j) = chunked_dot(X[i].data(), MY[j].data(), n);
      T = 0.5 * (T + T.transpose()).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
      if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver: dense stage failed");

      // largest theta = 1/mu^2 <-> smallest mu^2
      std::vector<std::vector<double>> svecs;
      std::vector<double> mus;
      int got = 0;
      for (int r = K - 1; r >= 0 && got < N; --r, ++got) {
        double theta = es.eigenvalues()(r);
        if (theta <= 0) break;
        std::vector<double> sv((std::size_t)n, 0.0);
        for (int k = 0; k < K; ++k) {
          double c = es.eigenvectors()(k, r);
          const double* xk = X[k].data();
          parallel_for(n, [&](std::int64_t i) { sv[i] += c * xk[i]; });
        }
        mus.push_back(1.0 / std::sqrt(theta));
        svecs.push_back(std::move(sv));
      }

      int nconv = 0;
      for (int i = 0; i < (int)svecs.size(); ++i) {
        forms.applyS(svecs[i].data(), scratch.data());
        forms.applyM(svecs[i].data(), y.data());
        double mu2 = mus[i] * mus[i];
        double r2 = 0, m2 = 0;
        for (std::int64_t k = 0; k < n; ++k) {
          double d = scratch[k] - mu2 * y[k];
          r2 += d * d;
          m2 += y[k] * y[k];
        }
        if (std::sqrt(r2) <= opt.residual_tol * std::sqrt(m2))
          ++nconv;
        else
          break;  // modes converge from the bottom; stop at the first failure
      }

      if (nconv >= N || spanned) {
        if ((int)svecs.size() < N)
          throw std::runtime_error("eigensolver: only " + std::to_string(svecs.size()) +
                                   " positive modes in a space of dimension " + std::to_string(n));
        out.N = N;
        for (int i = 0; i < N; ++i) {
          // deterministic sign: first nodal value of visible magnitude positive
          double mx = 0;
          for (std::int64_t k = 0; k < n; ++k) mx = std::fmax(mx, std::fabs(svecs[i][k]));
          for (std::int64_t k = 0; k < n; ++k)
            if (std::fabs(svecs[i][k]) > 1e-12 * mx) {
              if (svecs[i][k] < 0)
                for (std::int64_t q = 0; q < n; ++q) svecs[i][q] = -svecs[i][q];
              break;
            }
          out.mu.push_back(mus[i]);
          out.hbar.push_back(forms.integral_s_bhat(svecs[i].data()));
          out.s.push_back(std::move(svecs[i]));
        }
        for (int i = 1; i < N; ++i)
          if (out.mu[i] < out.mu[i - 1] - 1e-12 * out.mu[i - 1])
            throw std::runtime_error("eigensolver: frequencies not ordered");
        if (out.mu[0] <= 0) throw std::runtime_error("eigensolver: nonpositive frequency");
        return out;
      }
      if ((int)X.size() >= max_basis) {
        if (nconv == converged_prev)
          throw std::runtime_error("eigensolver stagnation: " + std::to_string(nconv) + " of " +
                                   std::to_string(N) + " modes converged at basis size " +
                                   std::to_string(X.size()));
        converged_prev = nconv;
        max_basis = std::min<std::int64_t>((std::int64_t)max_basis + 8 * p, n);
      }
      next_rr = (int)X.size() + std::max(2 * p, std::min(32, N));
    }

    // Krylov expansion: orthonormalized images of the newest block
    int added = 0;
    std::size_t start = images.size() >= (std::size_t)p ? images.size() - p : 0;
    for (std::size_t k = start; k < images.size() && (std::int64_t)X.size() < n && added < p; ++k) {
      std::vector<double> w = images[k];
      if (orthonormalize(forms, X, w, scratch) > 1e-10 * std::sqrt((double)n)) {
        X.push_back(std::move(w));
        ++added;
      }
    }
    while (added < p && (std::int64_t)X.size() < n) {
      if (!expand_random()) break;
      ++added;
    }
    if (added == 0 && (std::int64_t)X.size() < n)
      throw std::runtime_error("eigensolver: subspace expansion stalled at " +
                               std::to_string(X.size()));
  }
}

double sum_rule_defect(const ModeSet& modes, double int_bhat2, Vec3 xi, int upto) {
  int N = upto < 0 ? modes.N : std::min(upto, modes.N);
  double s = 0;
  for (int i = 0; i < N; ++i) {
    double hx = dot(modes.hbar[i], xi);
    s += hx * hx;
  }
  return int_bhat2 - s;
}

}  // namespace memcell
