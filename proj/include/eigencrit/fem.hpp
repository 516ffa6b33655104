#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "core.hpp"
#include "mesh.hpp"
#include "pencil.hpp"
#include "spectrum.hpp"

namespace eigencrit {

struct BoundaryConditionSpec {
  enum class Condition { dirichlet, neumann };
  enum class Kind { explicit_map, all_neumann, all_dirichlet };

  Kind kind = Kind::all_neumann;
  std::map<std::string, Condition> per_arc;

  static BoundaryConditionSpec all_neumann() { return {}; }
  static BoundaryConditionSpec all_dirichlet() {
    BoundaryConditionSpec bc;
    bc.kind = Kind::all_dirichlet;
    return bc;
  }
  static BoundaryConditionSpec mixed(std::map<std::string, Condition> m) {
    BoundaryConditionSpec bc;
    bc.kind = Kind::explicit_map;
    bc.per_arc = std::move(m);
    return bc;
  }
  static BoundaryConditionSpec dirichlet_on(std::set<std::string> arcs,
                                            const SurfaceMesh& mesh) {
    BoundaryConditionSpec bc;
    bc.kind = Kind::explicit_map;
    for (const auto& arc : mesh.boundary_arcs)
      bc.per_arc[arc.name] = arcs.count(arc.name) ? Condition::dirichlet
                                                  : Condition::neumann;
    return bc;
  }

  // Every arc assigned exactly once; Dirichlet requires actual boundary.
  std::map<std::string, Condition> resolve(const SurfaceMesh& mesh) const {
    bool closed = !mesh.has_boundary();
    std::map<std::string, Condition> out;
    if (kind == Kind::all_dirichlet) {
      require(!closed, errc::argument, "Dirichlet condition on a closed mesh");
      for (const auto& arc : mesh.boundary_arcs)
        out[arc.name] = Condition::dirichlet;
      return out;
    }
    if (kind == Kind::all_neumann) {
      for (const auto& arc : mesh.boundary_arcs)
        out[arc.name] = Condition::neumann;
      return out;
    }
    bool any_dirichlet = false;
    for (const auto& [name, cond] : per_arc)
      if (cond == Condition::dirichlet) any_dirichlet = true;
    if (closed)
      require(!any_dirichlet, errc::argument, "Dirichlet condition on a closed mesh");
    require(!(mesh.boundary_arcs.empty() && !per_arc.empty() && !closed),
            errc::validation, "unlabeled boundary: cannot resolve per-arc conditions");
    std::set<std::string> arc_names;
    for (const auto& arc : mesh.boundary_arcs) arc_names.insert(arc.name);
    for (const auto& [name, cond] : per_arc) {
      require(arc_names.count(name), errc::validation,
              "unknown boundary arc '" + name + "' in condition spec");
      out[name] = cond;
    }
    for (const auto& name : arc_names)
      require(out.count(name), errc::validation,
              "boundary arc '" + name + "' not assigned a condition");
    return out;
  }

  // Constrained vertices. Corners shared by a Dirichlet and a Neumann arc are
  // constrained (Dirichlet-dominant conforming choice).
  std::vector<int> dirichlet_vertices(const SurfaceMesh& mesh) const {
    if (kind == Kind::all_dirichlet) {
      require(mesh.has_boundary(), errc::argument,
              "Dirichlet condition on a closed mesh");
      return mesh.boundary_vertices();
    }
    auto resolved = resolve(mesh);
    std::set<int> s;
    for (const auto& [name, cond] : resolved)
      if (cond == Condition::dirichlet)
        for (int v : mesh.arc_vertex_set(name)) s.insert(v);
    return {s.begin(), s.end()};
  }
};

struct DensityField {
  Vec values;

  static DensityField constant(int n, double v = 1.0) {
    DensityField f;
    f.values = Vec::Constant(n, v);
    return f;
  }
  void validate() const {
    require(values.size() > 0, errc::validation, "empty density field");
    require(values.allFinite(), errc::validation, "non-finite density value");
    require(values.minCoeff() > 1e-10, errc::validation,
            "density must be strictly positive");
  }
};

namespace detail {

// ∫_T φ_a φ_b φ_c dA = |T| × 1/10 (all equal), 1/30 (two equal), 1/60 (distinct).
inline double tri_basis_coeff(int a, int b, int c) {
  if (a == b && b == c) return 1.0 / 10.0;
  if (a == b || b == c || a == c) return 1.0 / 30.0;
  return 1.0 / 60.0;
}

struct FemCache {
  int n = 0;
  std::vector<std::array<int, 3>> tris;
  std::vector<double> area;
  SpMat stiffness;  // full cotan stiffness, all vertices
};

inline std::shared_ptr<const FemCache> build_fem_cache(const SurfaceMesh& mesh) {
  auto cache = std::make_shared<FemCache>();
  cache->n = mesh.vertex_count();
  cache->tris = mesh.triangles;
  cache->area.resize(mesh.triangles.size());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.triangles.size() * 9);
  for (size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& f = mesh.triangles[t];
    double a2 = 2.0 * mesh.triangle_area(int(t));
    cache->area[t] = 0.5 * a2;
    for (int corner = 0; corner < 3; ++corner) {
      int m = f[size_t(corner)];
      int o1 = f[size_t((corner + 1) % 3)];
      int o2 = f[size_t((corner + 2) % 3)];
      const Eigen::Vector3d& pm = mesh.vertices[size_t(m)];
      double cot = (mesh.vertices[size_t(o1)] - pm)
                       .dot(mesh.vertices[size_t(o2)] - pm) / a2;
      trip.emplace_back(o1, o2, -0.5 * cot);
      trip.emplace_back(o2, o1, -0.5 * cot);
      trip.emplace_back(o1, o1, 0.5 * cot);
      trip.emplace_back(o2, o2, 0.5 * cot);
    }
  }
  cache->stiffness.resize(cache->n, cache->n);
  cache->stiffness.setFromTriplets(trip.begin(), trip.end());
  return cache;
}

// Consistent piecewise-linear mass for density beta, restricted to free DOFs
// (full_to_sub[v] < 0 marks constrained vertices). Exactly linear in beta.
inline SpMat restricted_mass(const FemCache& cache, const Vec& beta,
                             const std::vector<int>& full_to_sub, int sub_dim) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(cache.tris.size() * 9);
  for (size_t t = 0; t < cache.tris.size(); ++t) {
    const auto& f = cache.tris[t];
    for (int i = 0; i < 3; ++i) {
      int gi = full_to_sub[size_t(f[size_t(i)])];
      if (gi < 0) continue;
      for (int l = 0; l < 3; ++l) {
        int gl = full_to_sub[size_t(f[size_t(l)])];
        if (gl < 0) continue;
        double val = 0.0;
        for (int m = 0; m < 3; ++m)
          val += beta[f[size_t(m)]] * tri_basis_coeff(i, l, m);
        trip.emplace_back(gi, gl, cache.area[t] * val);
      }
    }
  }
  SpMat out(sub_dim, sub_dim);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

// Gradient of beta -> u^T M(beta) v: entry j is u^T M(e_j) v.
inline Vec mass_density_gradient(const FemCache& cache, const Vec& u_full,
                                 const Vec& v_full) {
  Vec g = Vec::Zero(cache.n);
  for (size_t t = 0; t < cache.tris.size(); ++t) {
    const auto& f = cache.tris[t];
    for (int i = 0; i < 3; ++i)
      for (int l = 0; l < 3; ++l) {
        double uv = u_full[f[size_t(i)]] * v_full[f[size_t(l)]];
        if (uv == 0.0) continue;
        for (int m = 0; m < 3; ++m)
          g[f[size_t(m)]] += cache.area[t] * uv * tri_basis_coeff(i, l, m);
      }
  }
  return g;
}

struct LaplaceState {
  std::shared_ptr<const FemCache> cache;
  std::vector<int> free;
  std::vector<int> full_to_free;
  SpMat K_ff;
};

inline SpMat submatrix(const SpMat& A, const std::vector<int>& rows,
                       const std::vector<int>& cols) {
  std::vector<int> row_map(size_t(A.rows()), -1);
  for (size_t i = 0; i < rows.size(); ++i) row_map[size_t(rows[i])] = int(i);
  std::vector<int> col_map(size_t(A.cols()), -1);
  for (size_t j = 0; j < cols.size(); ++j) col_map[size_t(cols[j])] = int(j);
  std::vector<Eigen::Triplet<double>> trip;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) {
      int r = row_map[size_t(it.row())];
      int c = col_map[size_t(it.col())];
      if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
    }
  SpMat out(int(rows.size()), int(cols.size()));
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

}  // namespace detail

// Barycentric vertex areas: weight_i = sum of |T|/3 over incident triangles,
// so weight . beta = ∫ beta dv_g for piecewise-linear beta.
inline Vec vertex_areas(const SurfaceMesh& mesh) {
  Vec w = Vec::Zero(mesh.vertex_count());
  for (int t = 0; t < mesh.triangle_count(); ++t) {
    double third = mesh.triangle_area(t) / 3.0;
    for (int e = 0; e < 3; ++e) w[mesh.triangles[size_t(t)][size_t(e)]] += third;
  }
  return w;
}

// Scaling sc(beta) = ∫ beta dv_g (L1 density norm), volume normalization for
// conformal Laplace eigenvalues.
inline ScalingSpec laplace_volume_scaling(const SurfaceMesh& mesh) {
  return density_lp_scaling(vertex_areas(mesh), 1.0);
}

// Conformal Laplace pencil: constant cotan stiffness, consistent mass linear
// in the density, Dirichlet arcs eliminated by row/column removal. Parameter
// x is the full per-vertex density field.
inline ParametricPencil assemble_conformal_laplace(const SurfaceMesh& mesh,
                                                   const DensityField& beta,
                                                   const BoundaryConditionSpec& bc) {
  mesh.validate();
  beta.validate();
  require(beta.values.size() == mesh.vertex_count(), errc::argument,
          "density field size does not match vertex count");

  auto constrained = bc.dirichlet_vertices(mesh);
  auto cache = detail::build_fem_cache(mesh);

  auto state = std::make_shared<detail::LaplaceState>();
  state->cache = cache;
  state->full_to_free.assign(size_t(cache->n), 0);
  for (int v : constrained) state->full_to_free[size_t(v)] = -1;
  for (int v = 0; v < cache->n; ++v)
    if (state->full_to_free[size_t(v)] == 0) {
      state->full_to_free[size_t(v)] = int(state->free.size());
      state->free.push_back(v);
    }
  require(!state->free.empty(), errc::argument,
          "boundary conditions constrain every vertex");
  state->K_ff = detail::submatrix(cache->stiffness, state->free, state->free);

  const int n_free = int(state->free.size());
  const int n_full = cache->n;

  ParametricPencil p;
  p.dim = n_free;
  p.param_dim = n_full;
  p.expected_kernel_dim = constrained.empty() ? 1 : 0;
  p.admissible = [n_full](const Vec& x) {
    return x.size() == n_full && x.allFinite() && x.minCoeff() > 1e-10;
  };
  p.stiffness = [state](const Vec&) { return Mat(state->K_ff); };
  p.stiffness_sparse = [state](const Vec&) { return state->K_ff; };
  p.mass = [state, n_free](const Vec& x) {
    return Mat(detail::restricted_mass(*state->cache, x, state->full_to_free, n_free));
  };
  p.mass_sparse = [state, n_free](const Vec& x) {
    return detail::restricted_mass(*state->cache, x, state->full_to_free, n_free);
  };
  p.stiffness_dir = [n_free](const Vec&, const Vec&) {
    return Mat::Zero(n_free, n_free).eval();
  };
  p.stiffness_dir_sparse = [n_free](const Vec&, const Vec&) {
    return SpMat(n_free, n_free);
  };
  p.mass_dir = [state, n_free](const Vec&, const Vec& h) {
    return Mat(detail::restricted_mass(*state->cache, h, state->full_to_free, n_free));
  };
  p.mass_dir_sparse = [state, n_free](const Vec&, const Vec& h) {
    return detail::restricted_mass(*state->cache, h, state->full_to_free, n_free);
  };
  p.dir_pairing_gradient = [state](const Vec&, const Vec& u, const Vec& v,
                                   double mu) {
    Vec u_full = Vec::Zero(state->cache->n);
    Vec v_full = Vec::Zero(state->cache->n);
    for (size_t i = 0; i < state->free.size(); ++i) {
      u_full[state->free[i]] = u[int(i)];
      v_full[state->free[i]] = v[int(i)];
    }
    return Vec(-mu * detail::mass_density_gradient(*state->cache, u_full, v_full));
  };
  return p;
}

// Mesh vertex id of each Laplace pencil DOF row (the unconstrained vertices).
inline std::vector<int> laplace_dof_vertices(const SurfaceMesh& mesh,
                                             const BoundaryConditionSpec& bc) {
  auto constrained = bc.dirichlet_vertices(mesh);
  std::set<int> cset(constrained.begin(), constrained.end());
  std::vector<int> out;
  for (int v = 0; v < mesh.vertex_count(); ++v)
    if (!cset.count(v)) out.push_back(v);
  return out;
}

// Sorted boundary vertices: the Steklov degrees of freedom.
inline std::vector<int> steklov_dof_vertices(const SurfaceMesh& mesh) {
  return mesh.boundary_vertices();
}

// Lumped arc mass weights: half the length of the adjacent boundary edges.
inline Vec steklov_lumped_weights(const SurfaceMesh& mesh) {
  auto dofs = steklov_dof_vertices(mesh);
  std::map<int, int> pos;
  for (size_t i = 0; i < dofs.size(); ++i) pos[dofs[i]] = int(i);
  Vec w = Vec::Zero(int(dofs.size()));
  for (const auto& e : mesh.boundary_edge_list()) {
    double len = (mesh.vertices[size_t(e.first)] - mesh.vertices[size_t(e.second)]).norm();
    w[pos.at(e.first)] += 0.5 * len;
    w[pos.at(e.second)] += 0.5 * len;
  }
  return w;
}

// Scaling sc(beta) = ∫_∂ beta dv_∂g (weighted perimeter).
inline ScalingSpec steklov_perimeter_scaling(const SurfaceMesh& mesh) {
  return density_lp_scaling(steklov_lumped_weights(mesh), 1.0);
}

// Steklov pencil on the boundary DOFs: stiffness is the Schur complement
// K_bb - K_bi K_ii^{-1} K_ib (discrete Dirichlet-to-Neumann form), mass is the
// lumped arc mass with density beta. Parameter x is the boundary density.
inline ParametricPencil assemble_steklov(const SurfaceMesh& mesh,
                                         const DensityField& beta_boundary) {
  mesh.validate();
  require(mesh.has_boundary(), errc::validation, "no boundary: Steklov needs one");
  beta_boundary.validate();

  auto b = steklov_dof_vertices(mesh);
  const int n_b = int(b.size());
  require(beta_boundary.values.size() == n_b, errc::argument,
          "boundary density size does not match boundary vertex count");

  auto cache = detail::build_fem_cache(mesh);
  std::vector<char> is_b(size_t(cache->n), 0);
  for (int v : b) is_b[size_t(v)] = 1;
  std::vector<int> interior;
  for (int v = 0; v < cache->n; ++v)
    if (!is_b[size_t(v)]) interior.push_back(v);

  Mat S;
  if (interior.empty()) {
    S = Mat(detail::submatrix(cache->stiffness, b, b));
  } else {
    SpMat K_ii = detail::submatrix(cache->stiffness, interior, interior);
    SpMat K_ib = detail::submatrix(cache->stiffness, interior, b);
    Eigen::SimplicialLLT<SpMat> llt(K_ii);
    require(llt.info() == Eigen::Success, errc::numerical,
            "interior stiffness factorization failed");
    S = Mat(detail::submatrix(cache->stiffness, b, b));
    Mat X = llt.solve(Mat(K_ib));
    S.noalias() -= Mat(K_ib).transpose() * X;
  }
  S = ((S + S.transpose()) / 2.0).eval();

  Vec w = steklov_lumped_weights(mesh);
  auto state = std::make_shared<std::pair<Mat, Vec>>(std::move(S), std::move(w));

  ParametricPencil p;
  p.dim = n_b;
  p.param_dim = n_b;
  p.expected_kernel_dim = 1;
  p.admissible = [n_b](const Vec& x) {
    return x.size() == n_b && x.allFinite() && x.minCoeff() > 1e-10;
  };
  p.stiffness = [state](const Vec&) { return state->first; };
  p.mass = [state](const Vec& x) {
    return Mat((state->second.array() * x.array()).matrix().asDiagonal());
  };
  p.stiffness_dir = [n_b](const Vec&, const Vec&) {
    return Mat::Zero(n_b, n_b).eval();
  };
  p.mass_dir = [state](const Vec&, const Vec& h) {
    return Mat((state->second.array() * h.array()).matrix().asDiagonal());
  };
  p.dir_pairing_gradient = [state](const Vec&, const Vec& u, const Vec& v,
                                   double mu) {
    return Vec(-mu * (state->second.array() * u.array() * v.array()).matrix());
  };
  return p;
}

// ---------------------------------------------------------------------------
// Hersch sums: per-model combinations of reciprocal volume-normalized first
// eigenvalues whose round-domain values are 3/8π, 3/4π, 3/2π, 3/π.
// ---------------------------------------------------------------------------

struct HerschTerm {
  std::string label;
  double lambda = 0.0;
  double lambda_bar = 0.0;
};

struct HerschReport {
  std::string model;
  double value = 0.0;
  double target = 0.0;
  std::vector<HerschTerm> terms;
};

inline HerschReport hersch_sum(const SurfaceMesh& mesh, const DensityField& beta) {
  HerschReport report;
  report.model = mesh.generator;
  const double vol = vertex_areas(mesh).dot(beta.values);

  auto add_terms = [&](const BoundaryConditionSpec& bc, int k_lo, int k_hi,
                       const std::string& label) {
    auto pencil = assemble_conformal_laplace(mesh, beta, bc);
    auto spec = solve_spectrum(pencil, beta.values, k_hi + pencil.expected_kernel_dim);
    for (int k = k_lo; k <= k_hi; ++k) {
      HerschTerm term;
      term.label = label + "_" + std::to_string(k);
      term.lambda = spec.lambda(k);
      term.lambda_bar = spec.lambda(k) * vol;
      require(term.lambda_bar > 0.0, errc::numerical,
              "nonpositive normalized eigenvalue in Hersch sum");
      report.terms.push_back(term);
    }
  };
  auto mixed = [&](std::set<std::string> dirichlet) {
    return BoundaryConditionSpec::dirichlet_on(std::move(dirichlet), mesh);
  };

  const std::string& model = mesh.generator;
  if (model == "sphere") {
    add_terms(BoundaryConditionSpec::all_neumann(), 1, 3, "lambda");
    report.target = 3.0 / (8.0 * M_PI);
  } else if (model == "half_sphere") {
    add_terms(mixed({"z0"}), 1, 1, "lambda_D");
    add_terms(BoundaryConditionSpec::all_neumann(), 1, 2, "lambda_N");
    report.target = 3.0 / (4.0 * M_PI);
  } else if (model == "quadrant") {
    add_terms(mixed({"y0"}), 1, 1, "lambda_A1");
    add_terms(mixed({"z0"}), 1, 1, "lambda_A2");
    add_terms(BoundaryConditionSpec::all_neumann(), 1, 1, "lambda_N");
    report.target = 3.0 / (2.0 * M_PI);
  } else if (model == "octant") {
    add_terms(mixed({"x0"}), 1, 1, "lambda_A1");
    add_terms(mixed({"y0"}), 1, 1, "lambda_A2");
    add_terms(mixed({"z0"}), 1, 1, "lambda_A3");
    report.target = 3.0 / M_PI;
  } else {
    fail(errc::argument, "no Hersch combination for model '" + model + "'");
  }

  for (const auto& term : report.terms) report.value += 1.0 / term.lambda_bar;
  return report;
}

}  // namespace eigencrit
