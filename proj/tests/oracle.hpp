#pragma once

// Shared test oracles. Everything here recomputes reference values through
// plain finite differences or brute force, independent of the library's
// derivative code paths.

#include <eigencrit/spectrum.hpp>

#include <functional>
#include <memory>
#include <vector>

namespace oracle {
using namespace eigencrit;

inline Mat rand_sym(rng_t& rng, int n, double scale) {
  Mat g(n, n);
  for (int j = 0; j < n; ++j) g.col(j) = random_gaussian(rng, n);
  return (scale * 0.5 * (g + g.transpose())).eval();
}

// Affine pencil K(x) = K0 + sum x_j KJ[j], M(x) = M0 + sum x_j MJ[j];
// M stays SPD on the admissible ball by construction.
struct AffineData {
  Mat K0, M0;
  std::vector<Mat> KJ, MJ;
};

// forced: eigenvalues K0 must carry at x=0 (repeats force multiplicity);
// empty means a plain random symmetric K0.
inline std::shared_ptr<AffineData> make_affine(rng_t& rng, int dim, int pdim,
                                               std::vector<double> forced = {}) {
  auto d = std::make_shared<AffineData>();
  if (forced.empty()) {
    d->K0 = rand_sym(rng, dim, 1.0);
  } else {
    Vec ev(dim);
    int i = 0;
    for (; i < static_cast<int>(forced.size()) && i < dim; ++i) ev[i] = forced[i];
    for (; i < dim; ++i) ev[i] = 3.0 + 1.7 * i;
    Mat Q = random_orthogonal(rng, dim);
    d->K0 = (Q * ev.asDiagonal() * Q.transpose()).eval();
    d->K0 = (0.5 * (d->K0 + d->K0.transpose())).eval();
  }
  d->M0 = Mat::Identity(dim, dim);
  for (int j = 0; j < pdim; ++j) {
    d->KJ.push_back(rand_sym(rng, dim, 0.5));
    d->MJ.push_back(rand_sym(rng, dim, 0.04));
  }
  return d;
}

inline ParametricPencil affine_pencil(std::shared_ptr<AffineData> d) {
  ParametricPencil p;
  p.dim = static_cast<int>(d->K0.rows());
  p.param_dim = static_cast<int>(d->KJ.size());
  p.stiffness = [d](const Vec& x) {
    Mat K = d->K0;
    for (int j = 0; j < x.size(); ++j) K += x[j] * d->KJ[j];
    return K;
  };
  p.mass = [d](const Vec& x) {
    Mat M = d->M0;
    for (int j = 0; j < x.size(); ++j) M += x[j] * d->MJ[j];
    return M;
  };
  p.stiffness_dir = [d](const Vec&, const Vec& h) {
    Mat K = Mat::Zero(d->K0.rows(), d->K0.cols());
    for (int j = 0; j < h.size(); ++j) K += h[j] * d->KJ[j];
    return K;
  };
  p.mass_dir = [d](const Vec&, const Vec& h) {
    Mat M = Mat::Zero(d->M0.rows(), d->M0.cols());
    for (int j = 0; j < h.size(); ++j) M += h[j] * d->MJ[j];
    return M;
  };
  p.admissible = [](const Vec& x) { return x.norm() < 2.0; };
  return p;
}

// One-sided difference quotient (f(x + t h) - f(x)) / t.
inline double fd_quotient(const std::function<double(const Vec&)>& f, const Vec& x, const Vec& h,
                          double t) {
  return (f((x + t * h).eval()) - f(x)) / t;
}

// Two-level Richardson extrapolation of the one-sided quotient; exact through
// third order along the ray.
inline double fd_right(const std::function<double(const Vec&)>& f, const Vec& x, const Vec& h,
                       double t0) {
  double d1 = fd_quotient(f, x, h, t0);
  double d2 = fd_quotient(f, x, h, t0 / 2);
  double d4 = fd_quotient(f, x, h, t0 / 4);
  double r1a = 2 * d2 - d1;
  double r1b = 2 * d4 - d2;
  return (4 * r1b - r1a) / 3;
}

// Central-difference Richardson gradient entry, for smooth scalar fields.
inline double fd_central(const std::function<double(const Vec&)>& f, const Vec& x, const Vec& h,
                         double t0) {
  auto D = [&](double t) { return (f((x + t * h).eval()) - f((x - t * h).eval())) / (2 * t); };
  double d1 = D(t0), d2 = D(t0 / 2);
  return (4 * d2 - d1) / 3;
}

// Raw eigenvalue lambda_k as a function of the parameter, for FD oracles.
inline std::function<double(const Vec&)> lambda_fn(const ParametricPencil& p, int k, int k_max) {
  return [&p, k, k_max](const Vec& x) { return solve_spectrum(p, x, k_max).lambda(k); };
}

// Brute-force extremum of sum_p w_p v_p^T A v_p over orthonormal frames:
// random starts polished by pairwise Givens rotations until stationary.
// Independent of the sorted-pairing formula under test.
inline double brute_pairing_max(const Vec& w, const Mat& A, int starts, rng_t& rng) {
  const int m = static_cast<int>(w.size());
  double best = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < starts; ++s) {
    Mat V = random_orthogonal(rng, m);
    Mat B = (V.transpose() * A * V).eval();
    for (int sweep = 0; sweep < 400; ++sweep) {
      double gained = 0;
      for (int p = 0; p < m; ++p)
        for (int q = p + 1; q < m; ++q) {
          double dw = w[p] - w[q];
          if (dw == 0) continue;
          double a = B(p, p), b = B(q, q), c = B(p, q);
          double mid = 0.5 * (a + b), rad = std::hypot(0.5 * (a - b), c);
          double target = dw > 0 ? mid + rad : mid - rad;
          double gain = dw * (target - a);
          if (gain <= 1e-14 * (1 + std::abs(target))) continue;
          double vx = c, vy = target - a;
          double nrm = std::hypot(vx, vy);
          if (nrm < 1e-300) continue;
          vx /= nrm;
          vy /= nrm;
          Vec bp = B.col(p), bq = B.col(q);
          B.col(p) = vx * bp + vy * bq;
          B.col(q) = -vy * bp + vx * bq;
          Vec rp = B.row(p), rq = B.row(q);
          B.row(p) = (vx * rp + vy * rq).transpose();
          B.row(q) = (-vy * rp + vx * rq).transpose();
          gained += gain;
        }
      if (gained < 1e-13) break;
    }
    double value = 0;
    for (int p = 0; p < m; ++p) value += w[p] * B(p, p);
    best = std::max(best, value);
  }
  return best;
}

inline double brute_pairing_min(const Vec& w, const Mat& A, int starts, rng_t& rng) {
  return -brute_pairing_max(w, (-A).eval(), starts, rng);
}

// Plain random-frame sampling, no polish; used where the spec asks for an
// observed sampled extremum.
inline double sampled_pairing_max(const Vec& w, const Mat& A, int frames, rng_t& rng) {
  const int m = static_cast<int>(w.size());
  double best = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < frames; ++s) {
    Mat V = random_orthogonal(rng, m);
    double value = 0;
    for (int p = 0; p < m; ++p) value += w[p] * V.col(p).dot(A * V.col(p));
    best = std::max(best, value);
  }
  return best;
}

}  // namespace oracle
