#pragma once

#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "subdiff.hpp"

namespace eigencrit {

// Projected subgradient iteration settings. The projection clamps at the
// positivity floor and optionally renormalizes the measure-weighted L1 norm
// so scale-invariant functionals are optimized on a slice.
struct OptimizeConfig {
  CombinationSpec combo;
  ScalingSpec scaling = ScalingSpec::none_scaling();

  enum class Sense { ascend, descend };
  enum class Schedule { constant, inverse_iter };
  Sense sense = Sense::ascend;
  Schedule schedule = Schedule::constant;
  double step = 0.1;
  int max_iters = 100;

  double floor = 1e-6;  // positivity floor kept by every projection
  bool normalize = false;
  Vec l1_measure;  // weights of the fixed L1 norm; ones when empty

  double cluster_tol = -1;  // forwarded to the spectral solves when > 0
  double margin_tol = -1;   // stop when the margin drops to this; < 0 uses the probe's tol
  int margin_every = 10;    // criticality snapshot cadence
  std::uint64_t seed = 2026;
  CertBudget cert;  // budget for the margin snapshots and the final probe

  void validate(int param_dim) const {
    // The zero-step trivial case is admissible by design; only negative
    // steps are rejected.
    require(step >= 0, errc::validation, "optimize: step must be nonnegative");
    require(floor > 0, errc::validation, "optimize: floor must be positive");
    require(max_iters >= 1, errc::validation, "optimize: iteration cap must be >= 1");
    require(margin_every >= 1, errc::validation, "optimize: margin cadence must be >= 1");
    require(l1_measure.size() == 0 || l1_measure.size() == param_dim, errc::validation,
            "optimize: L1 measure length mismatch");
  }
};

// Per-iteration log of the run. values/grad_norms/hashes have one entry per
// visited iterate; margins holds sparse (iteration, margin) snapshots.
struct Trajectory {
  std::vector<double> values;
  std::vector<double> grad_norms;
  std::vector<std::uint64_t> hashes;
  std::vector<std::pair<int, double>> margins;
  int iterations = 0;
  std::string stop_reason;
};

// CSV rows (iteration, value, grad_norm, margin); the margin column is only
// filled on snapshot iterations.
inline std::string trajectory_csv(const Trajectory& t) {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,value,grad_norm,margin\n";
  std::size_t next_margin = 0;
  for (int i = 0; i < t.iterations; ++i) {
    os << i << ',' << t.values[static_cast<std::size_t>(i)] << ','
       << t.grad_norms[static_cast<std::size_t>(i)] << ',';
    if (next_margin < t.margins.size() && t.margins[next_margin].first == i) {
      os << t.margins[next_margin].second;
      ++next_margin;
    }
    os << '\n';
  }
  return os.str();
}

// Riesz representative of sum_k d_k (sc * r(u_k) + lambda_k * sc_x) in the
// parameter coordinates, using the current eigenvector frame. At clustered
// eigenvalues this is one valid element of the hull, not a mixture search.
inline Vec subgradient(const ParametricPencil& pencil, const ClusteredSpectrum& spectrum,
                       const CombinationSpec& combo, const ScalingSpec& scaling, const Vec& x) {
  ComboState st = combination_state(spectrum, combo, scaling, x);
  const double sc = scaling.value_at(x);
  Vec g = st.S * scaling.gradient_at(x);
  for (int k = 1; k <= combo.N; ++k) {
    const int i = spectrum.cluster_of(k);
    const Vec u = spectrum.vector(k);
    g += st.d[k - 1] * sc *
         pairing_gradient(pencil, x, u, u, spectrum.clusters[static_cast<std::size_t>(i)].mu);
  }
  return g;
}

struct OptimizeResult {
  Vec beta;
  Trajectory trajectory;
  CriticalityReport certificate;
};

// Projected subgradient iteration toward critical densities. Stops on the
// iteration cap, on a margin snapshot at or below the tolerance, or when a
// step leaves the admissible set (keeping the last valid iterate).
inline OptimizeResult optimize(const ParametricPencil& pencil, const Vec& beta0,
                               const OptimizeConfig& config) {
  config.validate(pencil.param_dim);
  require(beta0.size() == pencil.param_dim, errc::argument,
          "optimize: initial density length mismatch");
  require(!pencil.admissible || pencil.admissible(beta0), errc::argument,
          "optimize: initial density not admissible");

  Vec measure = config.l1_measure.size() ? config.l1_measure : Vec::Ones(pencil.param_dim);
  const double l1_target = measure.dot(beta0.cwiseAbs());
  auto project = [&](Vec v) {
    v = v.cwiseMax(config.floor);
    if (config.normalize) {
      for (int round = 0; round < 2; ++round) {
        const double cur = measure.dot(v);
        require(cur > 0, errc::numerical, "optimize: normalization lost positivity");
        v *= l1_target / cur;
        v = v.cwiseMax(config.floor);
      }
    }
    return v;
  };

  const double cluster_tol = config.cluster_tol > 0 ? config.cluster_tol : 1e-6;
  const int k_need = std::min(pencil.dim, config.combo.N + pencil.expected_kernel_dim);
  const double sign = config.sense == OptimizeConfig::Sense::ascend ? 1.0 : -1.0;

  auto margin_at = [&](const Vec& x, std::uint64_t salt) {
    CertBudget budget = config.cert;
    budget.seed = config.seed ^ salt;
    if (budget.cluster_tol <= 0) budget.cluster_tol = cluster_tol;
    CriticalityReport rep = criticality_certificate(pencil, x, config.combo, config.scaling,
                                                    budget);
    const double tol = config.margin_tol >= 0 ? config.margin_tol : rep.tol;
    return std::make_pair(rep.sup_s_min, rep.sup_s_min <= tol);
  };

  Vec x = project(beta0);
  OptimizeResult out;
  Trajectory& traj = out.trajectory;
  for (int t = 0; t < config.max_iters; ++t) {
    ClusteredSpectrum spectrum = solve_spectrum(pencil, x, k_need, cluster_tol);
    ComboState st = combination_state(spectrum, config.combo, config.scaling, x);
    const double value = config.combo.evaluate(st.lambda_bar);
    require(std::isfinite(value), errc::numerical, "optimize: functional value not finite");
    Vec g = subgradient(pencil, spectrum, config.combo, config.scaling, x);

    traj.values.push_back(value);
    traj.grad_norms.push_back(g.norm());
    traj.hashes.push_back(hash_bytes(x));
    traj.iterations = t + 1;

    if (t % config.margin_every == 0) {
      auto [margin, stop] = margin_at(x, static_cast<std::uint64_t>(t) + 1);
      traj.margins.push_back({t, margin});
      if (stop) {
        traj.stop_reason = "margin tolerance";
        break;
      }
    }

    const double alpha =
        config.schedule == OptimizeConfig::Schedule::constant ? config.step
                                                              : config.step / (t + 1);
    if (alpha > 0) {
      Vec next = project(x + sign * alpha * g);
      if (pencil.admissible && !pencil.admissible(next)) {
        traj.stop_reason = "projection left the admissible set";
        break;
      }
      x = next;
    }
  }
  if (traj.stop_reason.empty()) traj.stop_reason = "iteration cap";

  out.beta = x;
  CertBudget final_budget = config.cert;
  final_budget.seed = config.seed;
  if (final_budget.cluster_tol <= 0) final_budget.cluster_tol = cluster_tol;
  out.certificate =
      criticality_certificate(pencil, x, config.combo, config.scaling, final_budget);
  return out;
}

}  // namespace eigencrit
