#pragma once

#include <algorithm>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include "core.hpp"

namespace eigencrit {

// Convex combination of frame-weighted quadratic images: entries (t_a, O_a)
// with sum t_a = 1, plus the shared weight vector d.
struct WeightedFrameCombo {
  int dim = 0;
  std::vector<std::pair<double, Mat>> entries;
  Vec weights;

  void validate() const {
    require(dim >= 1, errc::validation, "frame combo: dim must be >= 1");
    require(weights.size() == dim, errc::validation, "frame combo: weight length != dim");
    require(!entries.empty(), errc::validation, "frame combo: no entries");
    double total = 0;
    for (const auto& [t, O] : entries) {
      require(t >= -1e-12 && t <= 1 + 1e-12, errc::validation,
              "frame combo: weight outside [0,1]");
      total += t;
      require(O.rows() == dim && O.cols() == dim, errc::validation,
              "frame combo: frame shape != dim x dim");
      double gram = (O.transpose() * O - Mat::Identity(dim, dim)).cwiseAbs().maxCoeff();
      if (gram > 1e-10) {
        std::ostringstream os;
        os << "frame combo: non-orthonormal frame, Gram residual " << gram;
        fail(errc::validation, os.str());
      }
    }
    require(std::abs(total - 1.0) <= 1e-12, errc::validation,
            "frame combo: weights do not sum to 1");
  }
};

// mixed = certificate * weights; certificate is doubly stochastic.
struct MixResult {
  Vec mixed;
  Mat frame;
  Mat certificate;
};

// Collapses sum_a t_a sum_k d_k A(u_k^a) into sum_l mixed_l A(u_l) for every
// quadratic map A. mixed is sorted descending, frame columns follow.
inline MixResult mix_frames(const WeightedFrameCombo& combo) {
  combo.validate();
  const int m = combo.dim;
  Mat S = Mat::Zero(m, m);
  for (const auto& [t, O] : combo.entries)
    S.noalias() += t * O * combo.weights.asDiagonal() * O.transpose();
  S = 0.5 * (S + S.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Mat> eig(S);
  require(eig.info() == Eigen::Success, errc::numerical, "mix_frames: eigensolver failed");

  MixResult out;
  out.mixed.resize(m);
  out.frame.resize(m, m);
  for (int l = 0; l < m; ++l) {
    out.mixed[l] = eig.eigenvalues()[m - 1 - l];
    out.frame.col(l) = eig.eigenvectors().col(m - 1 - l);
  }

  out.certificate = Mat::Zero(m, m);
  for (const auto& [t, O] : combo.entries) {
    Mat P = out.frame.transpose() * O;
    out.certificate.noalias() += t * P.cwiseProduct(P);
  }
  return out;
}

struct BirkhoffTerm {
  double weight = 0;
  std::vector<int> perm;  // perm[row] = column holding the 1
};

namespace detail {

// Kuhn augmenting-path matching on the support graph; row_match[r] = column.
inline bool kuhn_augment(int r, const Mat& R, double support_eps,
                         std::vector<int>& row_match, std::vector<int>& col_match,
                         std::vector<char>& seen) {
  const int m = static_cast<int>(R.rows());
  for (int c = 0; c < m; ++c) {
    if (seen[c] || R(r, c) <= support_eps) continue;
    seen[c] = 1;
    if (col_match[c] < 0 ||
        kuhn_augment(col_match[c], R, support_eps, row_match, col_match, seen)) {
      row_match[r] = c;
      col_match[c] = r;
      return true;
    }
  }
  return false;
}

inline bool perfect_matching(const Mat& R, double support_eps, std::vector<int>& perm) {
  const int m = static_cast<int>(R.rows());
  std::vector<int> row_match(m, -1), col_match(m, -1);

  // Greedy max-entry pass first.
  std::vector<std::pair<int, int>> cells;
  cells.reserve(static_cast<std::size_t>(m) * m);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c)
      if (R(r, c) > support_eps) cells.emplace_back(r, c);
  std::stable_sort(cells.begin(), cells.end(),
                   [&](auto a, auto b) { return R(a.first, a.second) > R(b.first, b.second); });
  for (auto [r, c] : cells)
    if (row_match[r] < 0 && col_match[c] < 0) {
      row_match[r] = c;
      col_match[c] = r;
    }

  // Augment any rows the greedy pass left unmatched.
  for (int r = 0; r < m; ++r) {
    if (row_match[r] >= 0) continue;
    std::vector<char> seen(m, 0);
    if (!kuhn_augment(r, R, support_eps, row_match, col_match, seen)) return false;
  }
  perm = row_match;
  return true;
}

}  // namespace detail

// Greedy Birkhoff decomposition; at most (m-1)^2 + 1 terms, residual entries
// below 1e-10 at exit.
inline std::vector<BirkhoffTerm> birkhoff_decompose(Mat Q, double stop_threshold = 1e-10) {
  const int m = static_cast<int>(Q.rows());
  require(Q.cols() == m && m >= 1, errc::argument, "birkhoff: matrix must be square");
  for (int r = 0; r < m; ++r)
    require(std::abs(Q.row(r).sum() - 1.0) <= 1e-8, errc::validation,
            "birkhoff: row sums not stochastic");
  for (int c = 0; c < m; ++c)
    require(std::abs(Q.col(c).sum() - 1.0) <= 1e-8, errc::validation,
            "birkhoff: column sums not stochastic");
  require(Q.minCoeff() >= -1e-8, errc::validation, "birkhoff: negative entry");
  Q = Q.cwiseMax(0.0);

  const double support_eps = stop_threshold * 1e-2;
  const int max_terms = (m - 1) * (m - 1) + 1;
  std::vector<BirkhoffTerm> terms;
  for (int it = 0; it < max_terms && Q.maxCoeff() > stop_threshold; ++it) {
    std::vector<int> perm;
    if (!detail::perfect_matching(Q, support_eps, perm)) {
      std::ostringstream os;
      os << "birkhoff: no perfect matching on support, residual max " << Q.maxCoeff();
      fail(errc::numerical, os.str());
    }
    double w = std::numeric_limits<double>::infinity();
    for (int r = 0; r < m; ++r) w = std::min(w, Q(r, perm[r]));
    for (int r = 0; r < m; ++r) Q(r, perm[r]) -= w;
    terms.push_back({w, std::move(perm)});
  }
  if (Q.maxCoeff() > stop_threshold) {
    std::ostringstream os;
    os << "birkhoff: residual max " << Q.maxCoeff() << " after " << max_terms << " terms";
    fail(errc::numerical, os.str());
  }
  return terms;
}

struct MajorizationResult {
  bool member = false;
  double margin = 0;     // tightest partial-sum slack
  double total_gap = 0;  // |sum d_tilde - sum d|
};

// Membership of d_tilde in Mix(d): descending partial sums dominated by those
// of d, equal totals.
inline MajorizationResult majorization_check(const Vec& d_tilde, const Vec& d,
                                             double tol = 1e-10) {
  require(d_tilde.size() == d.size(), errc::argument, "majorization: length mismatch");
  const int m = static_cast<int>(d.size());
  std::vector<double> a(d_tilde.data(), d_tilde.data() + m);
  std::vector<double> b(d.data(), d.data() + m);
  std::sort(a.begin(), a.end(), std::greater<>());
  std::sort(b.begin(), b.end(), std::greater<>());

  MajorizationResult res;
  double pa = 0, pb = 0;
  res.margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < m; ++i) {
    pa += a[i];
    pb += b[i];
    if (i + 1 < m) res.margin = std::min(res.margin, pb - pa);
  }
  if (m == 1) res.margin = 0;
  res.total_gap = std::abs(pa - pb);
  res.member = res.margin >= -tol && res.total_gap <= tol;
  return res;
}

}  // namespace eigencrit
