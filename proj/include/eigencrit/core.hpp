#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace eigencrit {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using SpMat = Eigen::SparseMatrix<double>;

// Failure classes; process exit code is 3 for numerical, 2 for the rest.
enum class errc { argument, validation, consistency, io_format, numerical };

class error : public std::runtime_error {
public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  errc code() const noexcept { return code_; }
  int exit_code() const noexcept { return code_ == errc::numerical ? 3 : 2; }

private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& msg) { throw error(code, msg); }

inline void require(bool ok, errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

// All randomized routines draw from an explicitly seeded engine.
using rng_t = std::mt19937_64;

inline Vec random_gaussian(rng_t& rng, int n) {
  std::normal_distribution<double> gauss;
  Vec v(n);
  for (int i = 0; i < n; ++i) v[i] = gauss(rng);
  return v;
}

inline Vec random_unit(rng_t& rng, int n) {
  for (int attempt = 0; attempt < 64; ++attempt) {
    Vec v = random_gaussian(rng, n);
    double nrm = v.norm();
    if (nrm > 1e-12) return v / nrm;
  }
  fail(errc::numerical, "random_unit: degenerate draws");
}

// Random orthogonal matrix from the QR of a Gaussian draw, sign-fixed so R has
// a positive diagonal (uniform w.r.t. Haar measure).
inline Mat random_orthogonal(rng_t& rng, int n) {
  Mat g(n, n);
  for (int j = 0; j < n; ++j) g.col(j) = random_gaussian(rng, n);
  Eigen::HouseholderQR<Mat> qr(g);
  Mat q = qr.householderQ();
  Mat r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

// FNV-1a over raw bytes; stable across runs for identical inputs.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 1469598103934665603ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t hash_bytes(const Vec& v, std::uint64_t h = 1469598103934665603ull) {
  return fnv1a(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()), h);
}

inline int thread_cap_from_env() {
  if (const char* s = std::getenv("EIGENCRIT_THREADS")) {
    int n = std::atoi(s);
    if (n >= 1) return n;
  }
  return 1;
}

// Runs fn(i) for i in [0,n); each item owns its output slot so the result is
// identical for any thread count.
inline void parallel_for(int n, const std::function<void(int)>& fn, int threads = 0) {
  if (threads <= 0) threads = thread_cap_from_env();
  threads = std::min(threads, n > 0 ? n : 1);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (int i = t; i < n; i += threads) fn(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace eigencrit
