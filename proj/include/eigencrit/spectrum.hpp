#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <vector>

#include "pencil.hpp"

namespace eigencrit {

// One group of numerically coincident eigenvalues; j..J are 1-based indices
// into the nonzero part of the spectrum.
struct Cluster {
  double mu = 0;
  int j = 0;
  int J = 0;
  int m() const { return J - j + 1; }
};

// Spectrum slice of a pencil at a fixed parameter. raw_values holds the
// computed eigenvalues ascending, kernel modes included; eigenvalue indices
// k = 1..K skip the kernel modes (k_max = zero_modes + K).
struct ClusteredSpectrum {
  Vec x;
  Vec raw_values;
  Mat raw_vectors;
  int zero_modes = 0;
  std::vector<Cluster> clusters;
  double cluster_tol = 1e-6;
  bool last_cluster_truncated = false;

  int K() const { return static_cast<int>(raw_values.size()) - zero_modes; }

  double lambda(int k) const {
    require(k >= 1 && k <= K(), errc::argument, "spectrum: eigenvalue index out of range");
    return raw_values[zero_modes + k - 1];
  }

  Vec vector(int k) const {
    require(k >= 1 && k <= K(), errc::argument, "spectrum: eigenvalue index out of range");
    return raw_vectors.col(zero_modes + k - 1);
  }

  int cluster_of(int k) const {
    require(k >= 1 && k <= K(), errc::argument, "spectrum: eigenvalue index out of range");
    for (int i = 0; i < static_cast<int>(clusters.size()); ++i)
      if (k >= clusters[i].j && k <= clusters[i].J) return i;
    fail(errc::consistency, "spectrum: clusters do not cover index");
  }

  int position(int k) const { return k - clusters[cluster_of(k)].j + 1; }

  // Columns of the mass-orthonormal frame spanning cluster i.
  Mat frame(int i) const {
    require(i >= 0 && i < static_cast<int>(clusters.size()), errc::argument,
            "spectrum: cluster index out of range");
    const Cluster& c = clusters[i];
    return raw_vectors.middleCols(zero_modes + c.j - 1, c.m());
  }
};

namespace detail {

// Ascending eigenpairs of (K, M) via Cholesky reduction of M.
inline void dense_gevp(const Mat& K, const Mat& M, Vec& values, Mat& vectors) {
  Eigen::LLT<Mat> llt(M);
  require(llt.info() == Eigen::Success, errc::validation,
          "invalid parameter: mass matrix Cholesky factorization failed (not SPD)");
  Mat B = llt.matrixL().solve(K);
  Mat A = llt.matrixL().solve(B.transpose()).transpose();
  A = 0.5 * (A + A.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Mat> eig(A);
  require(eig.info() == Eigen::Success, errc::numerical, "dense eigensolver failed");
  values = eig.eigenvalues();
  vectors = llt.matrixU().solve(eig.eigenvectors());
}

// Block subspace iteration on A = K + shift*M for the lowest n_want pairs of
// (K, M). Deterministic: fixed seed, fixed iteration order.
inline void sparse_gevp_lowest(const SpMat& K, const SpMat& M, int n_want, Vec& values,
                               Mat& vectors) {
  const int n = static_cast<int>(K.rows());
  const int b = std::min(n, n_want + std::max(8, n_want / 4));
  const double knorm = std::max(K.norm(), 1e-300);

  double trK = 0, trM = 0;
  for (int i = 0; i < n; ++i) {
    trK += K.coeff(i, i);
    trM += M.coeff(i, i);
  }
  double shift = std::max(1e-3 * std::abs(trK) / std::max(trM, 1e-300), 1e-12);

  Eigen::SimplicialLLT<SpMat> llt;
  for (int attempt = 0;; ++attempt) {
    SpMat A = K + shift * M;
    llt.compute(A);
    if (llt.info() == Eigen::Success) break;
    require(attempt < 6, errc::validation,
            "invalid parameter: sparse Cholesky factorization failed (pencil not positive)");
    shift *= 100;
  }

  rng_t rng(0x9e3779b97f4a7c15ull);
  Mat X(n, b);
  for (int j = 0; j < b; ++j) X.col(j) = random_gaussian(rng, n);

  Vec theta;
  for (int it = 0; it < 500; ++it) {
    Mat Y = llt.solve(M * X);
    Mat Kr = Y.transpose() * (K * Y);
    Mat Mr = Y.transpose() * (M * Y);
    Kr = 0.5 * (Kr + Kr.transpose()).eval();
    Mr = 0.5 * (Mr + Mr.transpose()).eval();
    Eigen::LLT<Mat> mllt(Mr);
    if (mllt.info() != Eigen::Success) {
      Eigen::HouseholderQR<Mat> qr(Y);
      Y = qr.householderQ() * Mat::Identity(n, b);
      Kr = 0.5 * (Y.transpose() * (K * Y) + (Y.transpose() * (K * Y)).transpose());
      Mr = 0.5 * (Y.transpose() * (M * Y) + (Y.transpose() * (M * Y)).transpose());
      mllt.compute(Mr);
      require(mllt.info() == Eigen::Success, errc::numerical,
              "subspace iteration: projected mass not SPD");
    }
    Mat C = mllt.matrixL().solve(Kr);
    C = mllt.matrixL().solve(C.transpose()).transpose();
    C = 0.5 * (C + C.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Mat> eig(C);
    require(eig.info() == Eigen::Success, errc::numerical, "subspace iteration: Ritz solve failed");
    theta = eig.eigenvalues();
    X = Y * mllt.matrixU().solve(eig.eigenvectors());

    double worst = 0;
    for (int j = 0; j < n_want; ++j) {
      Vec r = K * X.col(j) - theta[j] * (M * X.col(j));
      worst = std::max(worst, r.norm() / (knorm * X.col(j).norm()));
    }
    if (worst <= 1e-11) break;
    if (it == 499) {
      std::ostringstream os;
      os << "subspace iteration failed to converge, relative residual " << worst;
      fail(errc::numerical, os.str());
    }
  }
  values = theta.head(n_want);
  vectors = X.leftCols(n_want);
}

// Greedy ascending grouping: a value joins the open cluster while the spread
// stays within tol * max(1, |running mean|).
inline std::vector<Cluster> cluster_values(const Vec& v, double tol) {
  std::vector<Cluster> out;
  const int K = static_cast<int>(v.size());
  int start = 0;
  double sum = 0;
  for (int k = 0; k < K; ++k) {
    sum += v[k];
    if (k + 1 < K) {
      double next_mean = (sum + v[k + 1]) / (k + 2 - start);
      if (v[k + 1] - v[start] <= tol * std::max(1.0, std::abs(next_mean))) continue;
    }
    out.push_back({sum / (k + 1 - start), start + 1, k + 1});
    start = k + 1;
    sum = 0;
  }
  return out;
}

}  // namespace detail

// First k_max eigenpairs of (K(x), M(x)), mass-orthonormal, clustered.
// Dense Cholesky reduction by default; pencils exposing sparse accessors use
// block subspace iteration beyond dense_cutoff rows.
inline ClusteredSpectrum solve_spectrum(const ParametricPencil& pencil, const Vec& x, int k_max,
                                        double cluster_tol = 1e-6, int dense_cutoff = 600) {
  require(k_max >= 1 && k_max <= pencil.dim, errc::argument,
          "solve_spectrum: k_max must lie in [1, dim]");
  require(cluster_tol > 0, errc::argument, "solve_spectrum: cluster_tol must be positive");
  require(x.size() == pencil.param_dim, errc::argument, "solve_spectrum: parameter size mismatch");
  require(!pencil.admissible || pencil.admissible(x), errc::validation,
          "solve_spectrum: parameter not admissible");

  // A few extra values close the last cluster; they are dropped afterwards.
  const int k_ext = std::min(pencil.dim, k_max + 8);

  Vec values;
  Mat vectors;
  double knorm;
  const bool use_sparse =
      pencil.stiffness_sparse && pencil.mass_sparse && pencil.dim > dense_cutoff &&
      k_ext + 8 < pencil.dim;
  if (use_sparse) {
    SpMat K = pencil.stiffness_sparse(x);
    SpMat M = pencil.mass_sparse(x);
    knorm = K.norm();
    detail::sparse_gevp_lowest(K, M, k_ext, values, vectors);
  } else {
    Mat K = pencil.stiffness(x);
    Mat M = pencil.mass(x);
    require(K.rows() == pencil.dim && K.cols() == pencil.dim, errc::consistency,
            "solve_spectrum: stiffness shape mismatch");
    knorm = K.norm();
    Vec all_values;
    Mat all_vectors;
    detail::dense_gevp(K, M, all_values, all_vectors);
    values = all_values.head(k_ext);
    vectors = all_vectors.leftCols(k_ext);

    double worst = 0;
    for (int j = 0; j < k_max; ++j) {
      Vec r = K * vectors.col(j) - values[j] * (M * vectors.col(j));
      worst = std::max(worst, r.norm() / std::max(knorm * vectors.col(j).norm(), 1e-300));
    }
    require(worst <= 1e-8, errc::numerical, "solve_spectrum: eigen-residual above tolerance");
  }

  ClusteredSpectrum spec;
  spec.x = x;
  spec.cluster_tol = cluster_tol;

  int zeros = 0;
  if (pencil.expected_kernel_dim > 0) {
    double scale = std::max(1.0, values.cwiseAbs().maxCoeff());
    while (zeros < pencil.expected_kernel_dim && zeros < k_max &&
           std::abs(values[zeros]) <= 1e-8 * scale)
      ++zeros;
  }
  spec.zero_modes = zeros;
  spec.raw_values = values.head(k_max);
  spec.raw_vectors = vectors.leftCols(k_max);

  Vec nonzero = values.segment(zeros, k_ext - zeros);
  std::vector<Cluster> ext = detail::cluster_values(nonzero, cluster_tol);
  const int K_stored = k_max - zeros;
  for (const Cluster& c : ext) {
    if (c.j > K_stored) break;
    Cluster kept = c;
    if (kept.J > K_stored) {
      // Recompute the representative over the kept slice only.
      kept.J = K_stored;
      kept.mu = nonzero.segment(kept.j - 1, kept.m()).mean();
      spec.last_cluster_truncated = true;
    }
    spec.clusters.push_back(kept);
  }
  return spec;
}

// One-sided directional derivatives of the eigenvalues in cluster i: the
// ascending eigenvalues nu of the cluster matrix u_j^T (K'_h - mu M'_h) u_l.
// The right derivative of lambda_{j+k-1} is nu_k; the left derivative of
// lambda_{J-k+1} is nu_{m-k+1}.
struct DirDerivative {
  Vec nu;
  Mat rotated_frame;  // cluster frame post-rotated to diagonalize the matrix
  Mat cluster_matrix;
};

inline DirDerivative directional_derivative(const ParametricPencil& pencil, const Vec& x,
                                            const ClusteredSpectrum& spectrum, const Vec& h,
                                            int cluster_index) {
  require(spectrum.x.size() == x.size() && (spectrum.x.array() == x.array()).all(),
          errc::consistency,
          "directional_derivative: spectrum was computed at a different parameter");
  require(cluster_index >= 0 && cluster_index < static_cast<int>(spectrum.clusters.size()),
          errc::argument, "directional_derivative: cluster index out of range");
  require(h.size() == pencil.param_dim, errc::argument,
          "directional_derivative: direction size mismatch");
  const Cluster& c = spectrum.clusters[cluster_index];
  require(!(spectrum.last_cluster_truncated &&
            cluster_index + 1 == static_cast<int>(spectrum.clusters.size())),
          errc::consistency, "directional_derivative: cluster extends beyond computed spectrum");

  const int m = c.m();
  Mat U = spectrum.frame(cluster_index);

  DirDerivative out;
  if (h.norm() == 0) {
    out.nu = Vec::Zero(m);
    out.rotated_frame = U;
    out.cluster_matrix = Mat::Zero(m, m);
    return out;
  }

  Mat A(m, m);
  if (pencil.stiffness_dir_sparse && pencil.mass_dir_sparse) {
    SpMat Kp = pencil.stiffness_dir_sparse(x, h);
    SpMat Mp = pencil.mass_dir_sparse(x, h);
    A = U.transpose() * (Kp * U) - c.mu * (U.transpose() * (Mp * U));
  } else {
    Mat Kp = pencil.stiffness_dir(x, h);
    Mat Mp = pencil.mass_dir(x, h);
    A = U.transpose() * (Kp - c.mu * Mp) * U;
  }
  A = 0.5 * (A + A.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Mat> eig(A);
  require(eig.info() == Eigen::Success, errc::numerical,
          "directional_derivative: cluster eigensolve failed");
  out.nu = eig.eigenvalues();
  out.rotated_frame = U * eig.eigenvectors();
  out.cluster_matrix = A;
  return out;
}

// Normalized eigenvalue and its right derivative: product rule
// sc * nu_{p_k} + <sc_x, h> * lambda_k.
inline std::pair<double, double> normalized_value_and_derivative(
    const ParametricPencil& pencil, const ClusteredSpectrum& spectrum, const ScalingSpec& scaling,
    const Vec& x, const Vec& h, int k) {
  const double lam = spectrum.lambda(k);
  const double sc = scaling.value_at(x);
  const int i = spectrum.cluster_of(k);
  DirDerivative dd = directional_derivative(pencil, x, spectrum, h, i);
  const double nu = dd.nu[spectrum.position(k) - 1];
  return {sc * lam, sc * nu + scaling.gradient_at(x).dot(h) * lam};
}

// Shared state of a combination at a point: normalized values, partials,
// S = sum d_k lambda_k over the raw eigenvalues, and c = sign(S).
struct ComboState {
  Vec lambda_bar;
  Vec d;
  double S = 0;
  int c = 0;
};

inline ComboState combination_state(const ClusteredSpectrum& spectrum,
                                    const CombinationSpec& combo, const ScalingSpec& scaling,
                                    const Vec& x) {
  require(combo.N <= spectrum.K(), errc::argument,
          "combination: requires more eigenvalues than computed");
  ComboState st;
  const double sc = scaling.value_at(x);
  st.lambda_bar.resize(combo.N);
  for (int k = 1; k <= combo.N; ++k) st.lambda_bar[k - 1] = sc * spectrum.lambda(k);
  st.d = combo.partials(st.lambda_bar);
  require(st.d.size() == combo.N, errc::consistency, "combination: partials length mismatch");
  for (int k = 1; k <= combo.N; ++k) st.S += st.d[k - 1] * spectrum.lambda(k);
  st.c = st.S > 0 ? 1 : (st.S < 0 ? -1 : 0);
  return st;
}

// Chain rule: sum_k d_k * (right derivative of normalized lambda_k), with
// coincident eigenvalues taking their ordered one-sided derivatives.
inline double combination_right_derivative(const ParametricPencil& pencil,
                                           const ClusteredSpectrum& spectrum,
                                           const CombinationSpec& combo,
                                           const ScalingSpec& scaling, const Vec& x,
                                           const Vec& h) {
  ComboState st = combination_state(spectrum, combo, scaling, x);
  const double sc = scaling.value_at(x);
  const double sc_h = scaling.gradient_at(x).dot(h);

  double acc = 0;
  int cached_cluster = -1;
  Vec cached_nu;
  for (int k = 1; k <= combo.N; ++k) {
    const int i = spectrum.cluster_of(k);
    if (i != cached_cluster) {
      cached_nu = directional_derivative(pencil, x, spectrum, h, i).nu;
      cached_cluster = i;
    }
    const double nu = cached_nu[spectrum.position(k) - 1];
    acc += st.d[k - 1] * (sc * nu + sc_h * spectrum.lambda(k));
  }
  return acc;
}

// Empirical local Lipschitz estimate per eigenvalue index; reported, never
// asserted as exact.
struct LipschitzProbe {
  Vec estimate;
  int pairs_used = 0;
  int skipped = 0;
};

inline LipschitzProbe lipschitz_probe(const ParametricPencil& pencil, const ScalingSpec& scaling,
                                      const Vec& x, double radius, int samples, int k_track,
                                      std::uint64_t seed = 2026) {
  require(radius > 0 && samples >= 1, errc::argument, "lipschitz_probe: bad radius or samples");
  rng_t rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  LipschitzProbe probe;
  probe.estimate = Vec::Zero(k_track);
  const int k_solve = std::min(pencil.dim, k_track + pencil.expected_kernel_dim);

  for (int s = 0; s < samples; ++s) {
    Vec y1 = x + radius * unif(rng) * random_unit(rng, static_cast<int>(x.size()));
    Vec y2 = x + radius * unif(rng) * random_unit(rng, static_cast<int>(x.size()));
    if ((pencil.admissible && (!pencil.admissible(y1) || !pencil.admissible(y2))) ||
        (y1 - y2).norm() < 1e-14 * std::max(1.0, radius)) {
      ++probe.skipped;
      continue;
    }
    ClusteredSpectrum s1 = solve_spectrum(pencil, y1, k_solve);
    ClusteredSpectrum s2 = solve_spectrum(pencil, y2, k_solve);
    if (s1.K() < k_track || s2.K() < k_track) {
      ++probe.skipped;
      continue;
    }
    const double gap = (y1 - y2).norm();
    const double sc1 = scaling.value_at(y1), sc2 = scaling.value_at(y2);
    for (int k = 1; k <= k_track; ++k)
      probe.estimate[k - 1] = std::max(
          probe.estimate[k - 1], std::abs(sc1 * s1.lambda(k) - sc2 * s2.lambda(k)) / gap);
    ++probe.pairs_used;
  }
  return probe;
}

}  // namespace eigencrit
