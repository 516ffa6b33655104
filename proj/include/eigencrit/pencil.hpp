#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>

#include "core.hpp"

namespace eigencrit {

// Discrete realization of a parametric pencil (K(x), M(x)) with its
// directional derivative matrices. mass(x) is SPD on the admissible set;
// stiffness_dir and mass_dir are linear in h.
struct ParametricPencil {
  int dim = 0;
  int param_dim = 0;
  std::function<Mat(const Vec&)> stiffness;
  std::function<Mat(const Vec&)> mass;
  std::function<Mat(const Vec&, const Vec&)> stiffness_dir;
  std::function<Mat(const Vec&, const Vec&)> mass_dir;
  std::function<bool(const Vec&)> admissible = [](const Vec&) { return true; };

  // Kernel dimension the pencil carries by construction (constants on a
  // closed surface); leading eigenvalues this close to zero index as k=0.
  int expected_kernel_dim = 0;

  // Optional sparse accessors; solves and derivative assembly prefer them at
  // large dim. Semantics match the dense fields exactly.
  std::function<SpMat(const Vec&)> stiffness_sparse;
  std::function<SpMat(const Vec&)> mass_sparse;
  std::function<SpMat(const Vec&, const Vec&)> stiffness_dir_sparse;
  std::function<SpMat(const Vec&, const Vec&)> mass_dir_sparse;

  // Optional fast path for g_j = u^T (K'_{e_j} - mu M'_{e_j}) v over all j.
  std::function<Vec(const Vec&, const Vec&, const Vec&, double)> dir_pairing_gradient;
};

// g with g . h = u^T (K'_h - mu M'_h) v for every h.
inline Vec pairing_gradient(const ParametricPencil& p, const Vec& x, const Vec& u, const Vec& v,
                            double mu) {
  if (p.dir_pairing_gradient) return p.dir_pairing_gradient(x, u, v, mu);
  Vec g(p.param_dim);
  Vec e = Vec::Zero(p.param_dim);
  const bool sparse = p.stiffness_dir_sparse && p.mass_dir_sparse;
  for (int j = 0; j < p.param_dim; ++j) {
    e[j] = 1;
    if (sparse)
      g[j] = u.dot(p.stiffness_dir_sparse(x, e) * v) - mu * u.dot(p.mass_dir_sparse(x, e) * v);
    else
      g[j] = u.dot(p.stiffness_dir(x, e) * v) - mu * u.dot(p.mass_dir(x, e) * v);
    e[j] = 0;
  }
  return g;
}

// Rescaling of the Rayleigh quotient: normalized eigenvalue is sc(x) * lambda.
struct ScalingSpec {
  enum class Kind { none, volume_power, density_lp };
  Kind kind = Kind::none;
  double exponent = 1.0;
  std::function<double(const Vec&)> value;
  std::function<Vec(const Vec&)> gradient;

  static ScalingSpec none_scaling() {
    ScalingSpec s;
    s.kind = Kind::none;
    return s;
  }

  double value_at(const Vec& x) const {
    if (!value) return 1.0;
    double sc = value(x);
    require(sc > 0, errc::validation, "scaling: value must be positive");
    return sc;
  }

  Vec gradient_at(const Vec& x) const {
    if (!gradient) return Vec::Zero(x.size());
    return gradient(x);
  }
};

// Discrete L^p norm of a positive density against fixed vertex measures:
// sc(x) = (sum_j w_j x_j^p)^(1/p), gradient_j = x_j^(p-1) w_j / sc^(p-1).
inline ScalingSpec density_lp_scaling(Vec vertex_measure, double p) {
  require(p >= 1, errc::argument, "density_lp_scaling: p must be >= 1");
  ScalingSpec s;
  s.kind = ScalingSpec::Kind::density_lp;
  s.exponent = p;
  auto w = std::make_shared<Vec>(std::move(vertex_measure));
  s.value = [w, p](const Vec& x) {
    double acc = 0;
    for (int j = 0; j < x.size(); ++j) acc += (*w)[j] * std::pow(std::abs(x[j]), p);
    return std::pow(acc, 1.0 / p);
  };
  s.gradient = [w, p](const Vec& x) {
    double acc = 0;
    for (int j = 0; j < x.size(); ++j) acc += (*w)[j] * std::pow(std::abs(x[j]), p);
    double sc = std::pow(acc, 1.0 / p);
    Vec g(x.size());
    for (int j = 0; j < x.size(); ++j)
      g[j] = (*w)[j] * std::pow(std::abs(x[j]), p - 1) / std::pow(sc, p - 1);
    return g;
  };
  return s;
}

// C^1 combination F of the first N normalized eigenvalues with its partials.
struct CombinationSpec {
  std::string name;
  int N = 1;
  std::function<double(const Vec&)> evaluate;
  std::function<Vec(const Vec&)> partials;

  static CombinationSpec single(int k) {
    require(k >= 1, errc::argument, "combination single: k must be >= 1");
    CombinationSpec c;
    c.name = "single(" + std::to_string(k) + ")";
    c.N = k;
    c.evaluate = [k](const Vec& lb) { return lb[k - 1]; };
    c.partials = [k](const Vec& lb) {
      Vec d = Vec::Zero(lb.size());
      d[k - 1] = 1;
      return d;
    };
    return c;
  }

  static CombinationSpec sum(int N) {
    require(N >= 1, errc::argument, "combination sum: N must be >= 1");
    CombinationSpec c;
    c.name = "sum(" + std::to_string(N) + ")";
    c.N = N;
    c.evaluate = [](const Vec& lb) { return lb.sum(); };
    c.partials = [](const Vec& lb) { return Vec::Ones(lb.size()); };
    return c;
  }

  static CombinationSpec inverse_sum(int N) {
    require(N >= 1, errc::argument, "combination inverse_sum: N must be >= 1");
    CombinationSpec c;
    c.name = "inverse_sum(" + std::to_string(N) + ")";
    c.N = N;
    c.evaluate = [](const Vec& lb) { return lb.cwiseInverse().sum(); };
    c.partials = [](const Vec& lb) { return (-lb.cwiseProduct(lb).cwiseInverse()).eval(); };
    return c;
  }

  static CombinationSpec weighted(const Vec& w) {
    require(w.size() >= 1, errc::argument, "combination weighted: empty weights");
    CombinationSpec c;
    c.name = "weighted";
    c.N = static_cast<int>(w.size());
    auto wc = std::make_shared<Vec>(w);
    c.evaluate = [wc](const Vec& lb) { return wc->dot(lb); };
    c.partials = [wc](const Vec&) { return *wc; };
    return c;
  }
};

}  // namespace eigencrit
