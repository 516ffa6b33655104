#pragma once

#include <limits>
#include <optional>

#include "spectrum.hpp"

namespace eigencrit {

// Support-function query against the hull C'_N(x): direction plus extremum,
// with an optional per-cluster override of the combination weights.
struct SupportQuery {
  Vec h;
  enum class Extremum { max, min } extremum = Extremum::max;
  // One entry per consumed cluster, padded to the cluster multiplicity;
  // derived from the combination when empty.
  std::vector<Vec> cluster_weights;
};

namespace detail {

// Combination weights restricted to each consumed cluster, zero-padded to the
// cluster multiplicity. Consumed clusters are those meeting indices 1..N.
inline std::vector<Vec> cluster_weights_for(const ClusteredSpectrum& s, const Vec& d, int N) {
  std::vector<Vec> out;
  const int first = s.cluster_of(1), last = s.cluster_of(N);
  for (int i = first; i <= last; ++i) {
    const Cluster& c = s.clusters[i];
    Vec w = Vec::Zero(c.m());
    for (int k = c.j; k <= std::min(c.J, N); ++k) w[k - c.j] = d[k - 1];
    out.push_back(w);
  }
  return out;
}

// max (or min) of sum_p w_p v_p^T A v_p over orthonormal frames (v_p): pair
// descending weights with descending (ascending) eigenvalues.
inline double sorted_pairing(const Vec& w, const Vec& nu_ascending, bool maximize) {
  const int m = static_cast<int>(w.size());
  std::vector<double> ws(w.data(), w.data() + m);
  std::sort(ws.begin(), ws.end(), std::greater<>());
  double acc = 0;
  for (int p = 0; p < m; ++p) acc += ws[p] * nu_ascending[maximize ? m - 1 - p : p];
  return acc;
}

struct SupportEval {
  double value = 0;
  Vec supergrad;  // gradient of h -> value at the achieved assignment
};

// Evaluates the support function and, when requested, a (super/sub)gradient
// from the achieved pairing's eigenvectors.
inline SupportEval support_eval(const ParametricPencil& pencil, const ClusteredSpectrum& s,
                                const ComboState& st, const ScalingSpec& scaling, const Vec& x,
                                const Vec& h, bool maximize,
                                const std::vector<Vec>& weights, bool want_grad) {
  const double sc = scaling.value_at(x);
  const Vec sc_x = scaling.gradient_at(x);

  SupportEval ev;
  ev.value = sc_x.dot(h) * st.S;
  if (want_grad) ev.supergrad = st.S * sc_x;

  const int first = s.cluster_of(1);
  for (std::size_t q = 0; q < weights.size(); ++q) {
    const int i = first + static_cast<int>(q);
    DirDerivative dd = directional_derivative(pencil, x, s, h, i);
    const int m = dd.nu.size();
    Vec w = weights[q];
    std::vector<int> order(m);
    for (int p = 0; p < m; ++p) order[p] = p;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return w[a] > w[b]; });

    for (int p = 0; p < m; ++p) {
      const int slot = maximize ? m - 1 - p : p;  // position in ascending nu
      ev.value += sc * w[order[p]] * dd.nu[slot];
      if (want_grad && w[order[p]] != 0) {
        Vec v = dd.rotated_frame.col(slot);
        ev.supergrad += sc * w[order[p]] *
                        pairing_gradient(pencil, x, v, v, s.clusters[i].mu);
      }
    }
  }
  return ev;
}

}  // namespace detail

// Support function of C'_N(x) in direction query.h: per-cluster sorted
// pairing of the combination weights with the eigenvalues of the cluster
// matrices, plus the scaling term <sc_x, h> S(x).
inline double support_function(const ParametricPencil& pencil, const ClusteredSpectrum& spectrum,
                               const CombinationSpec& combo, const ScalingSpec& scaling,
                               const Vec& x, const SupportQuery& query) {
  require(query.h.size() == pencil.param_dim, errc::argument,
          "support_function: direction size mismatch");
  require(query.h.allFinite(), errc::argument, "support_function: direction must be finite");
  ComboState st = combination_state(spectrum, combo, scaling, x);
  std::vector<Vec> weights = detail::cluster_weights_for(spectrum, st.d, combo.N);
  if (!query.cluster_weights.empty()) {
    require(query.cluster_weights.size() == weights.size(), errc::argument,
            "support_function: cluster weight count mismatch");
    for (std::size_t q = 0; q < weights.size(); ++q)
      require(query.cluster_weights[q].size() == weights[q].size(), errc::argument,
              "support_function: cluster weight length mismatch");
    weights = query.cluster_weights;
  }
  return detail::support_eval(pencil, spectrum, st, scaling, x, query.h,
                              query.extremum == SupportQuery::Extremum::max, weights, false)
      .value;
}

struct CertBudget {
  int random_starts = 64;
  int ascent_steps = 50;
  double tol = -1;  // <= 0 selects 1e-4 * max(1, max |normalized eigenvalue|)
  bool mean_zero = false;
  int k_max = 0;  // 0 selects combo.N plus a buffer
  double cluster_tol = -1;  // <= 0 selects the solver default
  std::uint64_t seed = 2026;
};

struct CriticalityReport {
  enum class Verdict { noncritical_with_witness, no_witness_found };
  Verdict verdict = Verdict::no_witness_found;
  std::optional<Vec> witness;
  double sup_s_min = -std::numeric_limits<double>::infinity();
  double inf_s_max = std::numeric_limits<double>::infinity();
  double tol = 0;
  int random_starts = 0;
  int ascent_steps = 0;
  std::uint64_t combo_hash = 0;
  std::uint64_t param_hash = 0;
};

// Refutation-only criticality probe: a witness h with s_min(h) > tol (or
// symmetrically s_max(h) < -tol) shows 0 lies outside the hull C'_N(x).
// Supergradient ascent on the concave, degree-1 homogeneous s_min over the
// unit sphere; "no witness found" is a non-refutation, not a proof.
inline CriticalityReport criticality_certificate(const ParametricPencil& pencil, const Vec& x,
                                                 const CombinationSpec& combo,
                                                 const ScalingSpec& scaling,
                                                 const CertBudget& budget = {}) {
  const int k_max = budget.k_max > 0
                        ? budget.k_max
                        : std::min(pencil.dim, combo.N + pencil.expected_kernel_dim + 6);
  const double ctol = budget.cluster_tol > 0 ? budget.cluster_tol : 1e-6;
  ClusteredSpectrum spectrum = solve_spectrum(pencil, x, k_max, ctol);
  ComboState st = combination_state(spectrum, combo, scaling, x);
  std::vector<Vec> weights = detail::cluster_weights_for(spectrum, st.d, combo.N);

  CriticalityReport rep;
  rep.tol = budget.tol > 0
                ? budget.tol
                : 1e-4 * std::max(1.0, st.lambda_bar.cwiseAbs().maxCoeff());
  rep.random_starts = budget.random_starts;
  rep.ascent_steps = budget.ascent_steps;
  rep.param_hash = hash_bytes(x);
  rep.combo_hash = fnv1a(combo.name.data(), combo.name.size(), fnv1a(&combo.N, sizeof combo.N));

  const int n = pencil.param_dim;
  auto project = [&](Vec v) {
    if (budget.mean_zero) v.array() -= v.mean();
    return v;
  };
  auto eval_min = [&](const Vec& h, bool grad) {
    return detail::support_eval(pencil, spectrum, st, scaling, x, h, false, weights, grad);
  };

  struct StartResult {
    double best = -std::numeric_limits<double>::infinity();
    Vec best_h;
  };
  std::vector<StartResult> results(static_cast<std::size_t>(budget.random_starts));

  parallel_for(budget.random_starts, [&](int start) {
    rng_t rng(budget.seed + 0x1000 * static_cast<std::uint64_t>(start));
    Vec h = project(random_unit(rng, n));
    if (h.norm() < 1e-12) h = random_unit(rng, n);
    h /= h.norm();

    StartResult res;
    auto consider = [&](const Vec& dir, double value) {
      if (value > res.best) {
        res.best = value;
        res.best_h = dir;
      }
    };
    detail::SupportEval ev = eval_min(h, true);
    consider(h, ev.value);
    for (int iter = 1; iter <= budget.ascent_steps; ++iter) {
      Vec g = project(ev.supergrad);
      double gn = g.norm();
      if (gn < 1e-15) break;
      Vec next = h + (1.0 / iter) * (g / gn);
      next = project(next);
      double nn = next.norm();
      if (nn < 1e-12) break;
      h = next / nn;
      ev = eval_min(h, iter < budget.ascent_steps);
      consider(h, ev.value);
    }
    results[static_cast<std::size_t>(start)] = std::move(res);
  });

  StartResult best;
  for (const StartResult& res : results) {
    if (res.best > best.best ||
        (res.best == best.best && res.best_h.size() &&
         (!best.best_h.size() || hash_bytes(res.best_h) < hash_bytes(best.best_h))))
      best = res;
  }

  rep.sup_s_min = best.best;
  rep.inf_s_max = -best.best;  // s_max(-h) = -s_min(h) at the argmax

  if (best.best > rep.tol) {
    // Independent re-verification with a fresh solve.
    ClusteredSpectrum fresh = solve_spectrum(pencil, x, k_max, ctol);
    ComboState fst = combination_state(fresh, combo, scaling, x);
    std::vector<Vec> fw = detail::cluster_weights_for(fresh, fst.d, combo.N);
    double check =
        detail::support_eval(pencil, fresh, fst, scaling, x, best.best_h, false, fw, false)
            .value;
    if (check > rep.tol) {
      rep.verdict = CriticalityReport::Verdict::noncritical_with_witness;
      rep.witness = best.best_h;
    }
  }
  return rep;
}

// Probe of the classical sub/superdifferential at eigenvalue index k: spectral
// gaps and pairwise distances between the frame gradient vectors.
struct ClassicalSubdiffReport {
  double gap_below = std::numeric_limits<double>::infinity();
  double gap_above = std::numeric_limits<double>::infinity();
  Mat gradients;  // param_dim x m, one column per frame vector
  Mat pairwise;   // m x m distance matrix
  double max_pairwise = 0;
  bool hull_collapsed = false;
};

inline ClassicalSubdiffReport classical_subdiff_probe(const ParametricPencil& pencil,
                                                      const ClusteredSpectrum& spectrum,
                                                      const ScalingSpec& scaling, const Vec& x,
                                                      int k, double tol = 1e-8) {
  const int i = spectrum.cluster_of(k);
  const Cluster& c = spectrum.clusters[i];
  const int m = c.m();
  const int r = spectrum.zero_modes + k - 1;

  ClassicalSubdiffReport rep;
  if (r > 0) rep.gap_below = spectrum.raw_values[r] - spectrum.raw_values[r - 1];
  if (r + 1 < spectrum.raw_values.size())
    rep.gap_above = spectrum.raw_values[r + 1] - spectrum.raw_values[r];

  const double sc = scaling.value_at(x);
  const Vec sc_x = scaling.gradient_at(x);
  Mat U = spectrum.frame(i);
  rep.gradients.resize(pencil.param_dim, m);
  for (int p = 0; p < m; ++p)
    rep.gradients.col(p) =
        sc * pairing_gradient(pencil, x, U.col(p), U.col(p), c.mu) + c.mu * sc_x;

  rep.pairwise = Mat::Zero(m, m);
  double scale = 1.0;
  for (int p = 0; p < m; ++p) scale = std::max(scale, rep.gradients.col(p).norm());
  for (int p = 0; p < m; ++p)
    for (int q = p + 1; q < m; ++q) {
      double d = (rep.gradients.col(p) - rep.gradients.col(q)).norm();
      rep.pairwise(p, q) = rep.pairwise(q, p) = d;
      rep.max_pairwise = std::max(rep.max_pairwise, d);
    }
  rep.hull_collapsed = rep.max_pairwise <= tol * scale;
  return rep;
}

}  // namespace eigencrit
