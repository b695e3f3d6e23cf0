#pragma once
// Small dense math types, deterministic reductions, and binary/JSON artifact
// helpers shared by every module.

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace memcell {

//--------------------------------------------------------------------------
// 3-vectors and 3x3 matrices
//--------------------------------------------------------------------------

struct Vec3 {
  double v[3]{0, 0, 0};
  double& operator[](int i) { return v[i]; }
  double operator[](int i) const { return v[i]; }
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(Vec3 a, Vec3 b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double c, Vec3 a) { return {c * a[0], c * a[1], c * a[2]}; }
inline double dot(Vec3 a, Vec3 b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }

struct Mat3 {
  double m[3][3]{};
  double* operator[](int i) { return m[i]; }
  const double* operator[](int i) const { return m[i]; }
};

inline Vec3 operator*(const Mat3& A, Vec3 x) {
  Vec3 r;
  for (int i = 0; i < 3; ++i) r[i] = A[i][0] * x[0] + A[i][1] * x[1] + A[i][2] * x[2];
  return r;
}
inline Mat3 operator+(const Mat3& A, const Mat3& B) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = A[i][j] + B[i][j];
  return r;
}
inline Mat3 operator*(double c, const Mat3& A) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = c * A[i][j];
  return r;
}
inline double contract(const Mat3& A, const Mat3& B) {
  double s = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) s += A[i][j] * B[i][j];
  return s;
}
// symmetrized dyad a (.) b = (a b^T + b a^T)/2
inline Mat3 sym_dyad(Vec3 a, Vec3 b) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = 0.5 * (a[i] * b[j] + a[j] * b[i]);
  return r;
}

//--------------------------------------------------------------------------
// Mandel notation: symmetric 3x3 <-> 6-vector isometry
//   (e11, e22, e33, sqrt2*e23, sqrt2*e13, sqrt2*e12)
//--------------------------------------------------------------------------

using Mandel6 = std::array<double, 6>;

inline Mandel6 to_mandel(const Mat3& e) {
  const double s = std::sqrt(2.0);
  return {e[0][0], e[1][1], e[2][2], s * e[1][2], s * e[0][2], s * e[0][1]};
}
inline Mat3 from_mandel(const Mandel6& m) {
  const double s = 1.0 / std::sqrt(2.0);
  Mat3 e;
  e[0][0] = m[0]; e[1][1] = m[1]; e[2][2] = m[2];
  e[1][2] = e[2][1] = s * m[3];
  e[0][2] = e[2][0] = s * m[4];
  e[0][1] = e[1][0] = s * m[5];
  return e;
}

//--------------------------------------------------------------------------
// Jacobi eigensolver for small symmetric matrices (k <= 8); deterministic,
// no external dependency.  Returns eigenvalues ascending; V columns are the
// eigenvectors when requested.
//--------------------------------------------------------------------------

inline void jacobi_eig(int k, double* A /* k*k, row-major, clobbered */, double* eigs,
                       double* V = nullptr) {
  if (V) {
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) V[i * k + j] = (i == j) ? 1.0 : 0.0;
  }
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = 0;
    for (int i = 0; i < k; ++i)
      for (int j = i + 1; j < k; ++j) off += A[i * k + j] * A[i * k + j];
    if (off < 1e-30) break;
    for (int p = 0; p < k; ++p)
      for (int q = p + 1; q < k; ++q) {
        double apq = A[p * k + q];
        if (std::fabs(apq) < 1e-300) continue;
        double theta = (A[q * k + q] - A[p * k + p]) / (2 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) / (std::fabs(theta) + std::sqrt(theta * theta + 1));
        double c = 1.0 / std::sqrt(t * t + 1), s = t * c;
        for (int i = 0; i < k; ++i) {
          double aip = A[i * k + p], aiq = A[i * k + q];
          A[i * k + p] = c * aip - s * aiq;
          A[i * k + q] = s * aip + c * aiq;
        }
        for (int i = 0; i < k; ++i) {
          double api = A[p * k + i], aqi = A[q * k + i];
          A[p * k + i] = c * api - s * aqi;
          A[q * k + i] = s * api + c * aqi;
        }
        if (V)
          for (int i = 0; i < k; ++i) {
            double vip = V[i * k + p], viq = V[i * k + q];
            V[i * k + p] = c * vip - s * viq;
            V[i * k + q] = s * vip + c * viq;
          }
      }
  }
  for (int i = 0; i < k; ++i) eigs[i] = A[i * k + i];
  // insertion sort ascending, carrying eigenvector columns along
  for (int i = 1; i < k; ++i)
    for (int j = i; j > 0 && eigs[j] < eigs[j - 1]; --j) {
      std::swap(eigs[j], eigs[j - 1]);
      if (V)
        for (int r = 0; r < k; ++r) std::swap(V[r * k + j], V[r * k + j - 1]);
    }
}

//--------------------------------------------------------------------------
// ElasticTensor: symmetric 4th-order tensor on symmetric 3x3 matrices,
// stored as the 6x6 Mandel matrix.  Validates major symmetry and ellipticity
// at construction.
//--------------------------------------------------------------------------

class ElasticTensor {
 public:
  static ElasticTensor isotropic(double lambda, double mu) {
    std::array<double, 36> c{};
    for (int i = 0; i < 6; ++i) c[i * 6 + i] = 2 * mu;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) c[i * 6 + j] += lambda;
    return ElasticTensor(c);
  }
  static ElasticTensor from_mandel(const std::array<double, 36>& c) { return ElasticTensor(c); }

  Mandel6 apply(const Mandel6& e) const {
    Mandel6 r{};
    for (int i = 0; i < 6; ++i) {
      double s = 0;
      for (int j = 0; j < 6; ++j) s += c_[i * 6 + j] * e[j];
      r[i] = s;
    }
    return r;
  }
  double contract(const Mandel6& e, const Mandel6& f) const {
    double s = 0;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) s += e[i] * c_[i * 6 + j] * f[j];
    return s;
  }
  double ellipticity() const { return ellip_; }
  const std::array<double, 36>& mandel_matrix() const { return c_; }
  ElasticTensor scaled(double f) const {
    std::array<double, 36> c = c_;
    for (auto& x : c) x *= f;
    return ElasticTensor(c);
  }
  // 3x3 contraction  Ahat_ij = A (e_i (.) xi) : (e_j (.) xi)
  Mat3 directional(Vec3 xi) const {
    Mandel6 base[3];
    Vec3 e[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (int i = 0; i < 3; ++i) base[i] = to_mandel(sym_dyad(e[i], xi));
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r[i][j] = contract(base[i], base[j]);
    return r;
  }

 private:
  explicit ElasticTensor(const std::array<double, 36>& c) : c_(c) {
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < i; ++j)
        if (std::fabs(c_[i * 6 + j] - c_[j * 6 + i]) > 1e-12 * (1 + std::fabs(c_[i * 6 + j])))
          throw std::runtime_error("elastic tensor: major symmetry violated");
    double a[36];
    std::memcpy(a, c_.data(), sizeof a);
    double eig[6];
    jacobi_eig(6, a, eig);
    ellip_ = eig[0];
    if (ellip_ <= 0) throw std::runtime_error("elastic tensor: not uniformly elliptic");
  }
  std::array<double, 36> c_;
  double ellip_ = 0;
};

//--------------------------------------------------------------------------
// Deterministic reductions and a minimal static-partition parallel_for.
// Results are independent of the thread count: partial sums are always
// formed per fixed-size chunk and combined in chunk order.
//--------------------------------------------------------------------------

inline std::atomic<int>& thread_count() {
  static std::atomic<int> n{1};
  return n;
}
inline void set_thread_count(int n) { thread_count() = n < 1 ? 1 : n; }

template <class F>
void parallel_for_chunks(std::int64_t nchunks, F&& body) {
  int nt = thread_count();
  if (nt <= 1 || nchunks <= 1) {
    for (std::int64_t c = 0; c < nchunks; ++c) body(c);
    return;
  }
  std::atomic<std::int64_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::int64_t c = next.fetch_add(1);
      if (c >= nchunks) return;
      body(c);
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < nt; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

inline constexpr std::int64_t kChunk = 4096;

template <class F>
void parallel_for(std::int64_t n, F&& body) {  // body(i) for each index
  std::int64_t nchunks = (n + kChunk - 1) / kChunk;
  parallel_for_chunks(nchunks, [&](std::int64_t c) {
    std::int64_t e = std::min(n, (c + 1) * kChunk);
    for (std::int64_t i = c * kChunk; i < e; ++i) body(i);
  });
}

inline double chunked_dot(const double* a, const double* b, std::int64_t n) {
  std::int64_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(nchunks, 0.0);
  parallel_for_chunks(nchunks, [&](std::int64_t c) {
    std::int64_t e = std::min(n, (c + 1) * kChunk);
    double s = 0;
    for (std::int64_t i = c * kChunk; i < e; ++i) s += a[i] * b[i];
    partial[c] = s;
  });
  double s = 0;
  for (double p : partial) s += p;
  return s;
}
inline double chunked_sum(const double* a, std::int64_t n) {
  std::int64_t nchunks = (n + kChunk - 1) / kChunk;
  std::vector<double> partial(nchunks, 0.0);
  parallel_for_chunks(nchunks, [&](std::int64_t c) {
    std::int64_t e = std::min(n, (c + 1) * kChunk);
    double s = 0;
    for (std::int64_t i = c * kChunk; i < e; ++i) s += a[i];
    partial[c] = s;
  });
  double s = 0;
  for (double p : partial) s += p;
  return s;
}

// Fixed-seed linear congruential generator for reproducible solver starting
// blocks (decoupled from the user-facing --seed on purpose: artifacts must
// not depend on the probe seed).
struct Lcg {
  std::uint64_t s;
  explicit Lcg(std::uint64_t seed) : s(seed ? seed : 0x9e3779b97f4a7c15ull) {}
  double uniform() {  // in (-1, 1)
    s = s * 6364136223846793005ull + 1442695040888963407ull;
    return 2.0 * (double)(s >> 11) / 9007199254740992.0 - 1.0;
  }
};

//--------------------------------------------------------------------------
// FNV-1a fingerprints and raw little-endian f64 array I/O
//--------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}
inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

inline void write_f64(const std::filesystem::path& p, const double* data, std::size_t n) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for write: " + p.string());
  f.write(reinterpret_cast<const char*>(data), std::streamsize(n * sizeof(double)));
  if (!f) throw std::runtime_error("short write: " + p.string());
}
inline std::vector<double> read_f64(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary | std::ios::ate);
  if (!f) throw std::runtime_error("cannot open for read: " + p.string());
  auto bytes = (std::size_t)f.tellg();
  if (bytes % sizeof(double)) throw std::runtime_error("truncated f64 file: " + p.string());
  std::vector<double> out(bytes / sizeof(double));
  f.seekg(0);
  f.read(reinterpret_cast<char*>(out.data()), (std::streamsize)bytes);
  if (!f) throw std::runtime_error("short read: " + p.string());
  return out;
}

}  // namespace memcell
