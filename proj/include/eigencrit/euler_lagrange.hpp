#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fem.hpp"
#include "mixing.hpp"
#include "subdiff.hpp"

namespace eigencrit {

// Candidate quadric eigenmap extracted from a combination at a point: one
// column per slot of the consumed clusters, scaled so phi_k^T M(x) phi_k
// equals |d_tilde_k| / |S| (plain |d_tilde_k| when S = 0).
struct QuadricMap {
  Vec lambda;                // per column: the cluster eigenvalue mu_i
  std::vector<int> cluster;  // per column: source cluster ordinal
  Eigen::VectorXi eps;       // per column: sign in {-1, 0, +1}
  Vec d_tilde;               // per column: mixed weight, descending per cluster
  Mat Phi;                   // columns in pencil DOF space
  double S = 0;              // sum d_k lambda_k over the consumed range
  int c = 0;                 // sign of S
  double sc = 1;             // scaling value at the assembly point

  // Row -> mesh vertex map; empty means rows already enumerate all vertices.
  std::vector<int> dof_vertices;
  // Per column: arcs where the column is constrained to vanish.
  std::vector<std::vector<std::string>> dirichlet_arcs;

  bool empty_map = false;  // every mixed weight vanished
  std::string note;

  int columns() const { return static_cast<int>(Phi.cols()); }
};

namespace detail {

// Dense apply of K(x), M(x) preferring the sparse accessors; caches the
// assembled operators for repeated column checks.
struct PencilApply {
  bool sparse = false;
  SpMat Ks, Ms;
  Mat Kd, Md;
  double knorm = 0, mnorm = 0;  // infinity norms

  PencilApply(const ParametricPencil& p, const Vec& x) {
    sparse = static_cast<bool>(p.stiffness_sparse) && static_cast<bool>(p.mass_sparse);
    if (sparse) {
      Ks = p.stiffness_sparse(x);
      Ms = p.mass_sparse(x);
      Vec rk = Vec::Zero(Ks.rows()), rm = Vec::Zero(Ms.rows());
      for (int o = 0; o < Ks.outerSize(); ++o)
        for (SpMat::InnerIterator it(Ks, o); it; ++it) rk[it.row()] += std::abs(it.value());
      for (int o = 0; o < Ms.outerSize(); ++o)
        for (SpMat::InnerIterator it(Ms, o); it; ++it) rm[it.row()] += std::abs(it.value());
      knorm = rk.size() ? rk.maxCoeff() : 0;
      mnorm = rm.size() ? rm.maxCoeff() : 0;
    } else {
      Kd = p.stiffness(x);
      Md = p.mass(x);
      knorm = Kd.cwiseAbs().rowwise().sum().maxCoeff();
      mnorm = Md.cwiseAbs().rowwise().sum().maxCoeff();
    }
  }
  Vec K(const Vec& v) const { return sparse ? Vec(Ks * v) : Vec(Kd * v); }
  Vec M(const Vec& v) const { return sparse ? Vec(Ms * v) : Vec(Md * v); }
};

// Largest in-cluster deviation from the representative value.
inline double cluster_width(const ClusteredSpectrum& s, int i) {
  const Cluster& c = s.clusters[i];
  double w = 0;
  for (int k = c.j; k <= c.J; ++k) w = std::max(w, std::abs(s.lambda(k) - c.mu));
  return w;
}

}  // namespace detail

// Builds the quadric map of a combination at x. Per consumed cluster the
// weights pass through mix_frames (identity single-frame combo unless the
// caller supplies a mixture keyed by cluster ordinal), the cluster frame is
// rotated accordingly, and columns are scaled so the quadric normalization
// phi_k^T M(x) phi_k = |d_tilde_k| / |S| holds exactly. joint_S overrides S
// when the map is one block of a multi-pencil candidate sharing a common
// normalization. Columns with negligible weight get eps = 0 and a zero column.
inline QuadricMap assemble_el_candidate(
    const ParametricPencil& pencil, const ClusteredSpectrum& spectrum,
    const CombinationSpec& combo, const ScalingSpec& scaling, const Vec& x,
    const std::map<int, std::vector<std::pair<double, Mat>>>& mixtures = {},
    std::optional<double> joint_S = std::nullopt) {
  ComboState st = combination_state(spectrum, combo, scaling, x);
  std::vector<Vec> weights = detail::cluster_weights_for(spectrum, st.d, combo.N);
  const int first = spectrum.cluster_of(1);

  QuadricMap map;
  map.sc = scaling.value_at(x);
  map.S = joint_S.value_or(st.S);
  double s_ref = 0;
  for (int k = 1; k <= combo.N; ++k) s_ref += std::abs(st.d[k - 1] * spectrum.lambda(k));
  if (std::abs(map.S) <= 1e-12 * s_ref) map.S = 0;
  map.c = map.S > 0 ? 1 : (map.S < 0 ? -1 : 0);

  struct Slot {
    double dt, mu;
    int cluster;
    Vec u;
  };
  std::vector<Slot> slots;
  for (std::size_t q = 0; q < weights.size(); ++q) {
    const int i = first + static_cast<int>(q);
    const int m = static_cast<int>(weights[q].size());
    WeightedFrameCombo wf;
    wf.dim = m;
    wf.weights = weights[q];
    auto it = mixtures.find(i);
    if (it != mixtures.end())
      wf.entries = it->second;
    else
      wf.entries = {{1.0, Mat::Identity(m, m)}};
    MixResult mix = mix_frames(wf);

    Mat U = spectrum.frame(i) * mix.frame;
    // Rotations of a mass-orthonormal frame stay mass-orthonormal.
    for (int l = 0; l < m; ++l)
      slots.push_back({mix.mixed[l], spectrum.clusters[i].mu, i, U.col(l)});
  }

  const int J = static_cast<int>(slots.size());
  double max_dt = 0;
  for (const Slot& s : slots) max_dt = std::max(max_dt, std::abs(s.dt));

  if (max_dt == 0) {
    map.empty_map = true;
    map.note = "all mixed weights vanish; no eigenmap candidate";
    map.Phi.resize(pencil.dim, 0);
    map.eps.resize(0);
    return map;
  }

  map.lambda.resize(J);
  map.d_tilde.resize(J);
  map.eps.resize(J);
  map.cluster.resize(static_cast<std::size_t>(J));
  map.Phi.resize(pencil.dim, J);
  map.dirichlet_arcs.assign(static_cast<std::size_t>(J), {});
  for (int k = 0; k < J; ++k) {
    const Slot& s = slots[static_cast<std::size_t>(k)];
    map.lambda[k] = s.mu;
    map.d_tilde[k] = s.dt;
    map.cluster[static_cast<std::size_t>(k)] = s.cluster;
    if (std::abs(s.dt) <= 1e-12 * max_dt) {
      map.eps[k] = 0;
      map.Phi.col(k).setZero();
    } else {
      map.eps[k] = s.dt > 0 ? 1 : -1;
      const double scale =
          map.S != 0 ? std::sqrt(std::abs(s.dt) / std::abs(map.S)) : std::sqrt(std::abs(s.dt));
      map.Phi.col(k) = scale * s.u;
    }
  }

  // Invariants: nonzero columns solve the pencil at their cluster value up to
  // the cluster width, and columns within a cluster stay mass-orthogonal.
  detail::PencilApply op(pencil, x);
  for (int k = 0; k < J; ++k) {
    if (map.eps[k] == 0) continue;
    const Vec phi = map.Phi.col(k);
    const double width = detail::cluster_width(spectrum, map.cluster[static_cast<std::size_t>(k)]);
    const double bound =
        (1e-7 * (op.knorm + std::abs(map.lambda[k]) * op.mnorm) + 2.0 * width * op.mnorm) *
        phi.norm();
    const double resid = (op.K(phi) - map.lambda[k] * op.M(phi)).norm();
    if (resid > std::max(bound, 1e-300)) {
      std::ostringstream os;
      os << "el candidate: column " << k + 1 << " eigen-residual " << resid << " exceeds "
         << bound;
      fail(errc::consistency, os.str());
    }
  }
  for (int a = 0; a < J; ++a)
    for (int b = a + 1; b < J; ++b) {
      if (map.cluster[static_cast<std::size_t>(a)] != map.cluster[static_cast<std::size_t>(b)])
        continue;
      if (map.eps[a] == 0 || map.eps[b] == 0) continue;
      const double g = map.Phi.col(a).dot(op.M(map.Phi.col(b)));
      const double ref = map.Phi.col(a).norm() * map.Phi.col(b).norm() * op.mnorm;
      require(std::abs(g) <= 1e-8 * std::max(ref, 1e-300), errc::consistency,
              "el candidate: cluster columns lost mass-orthogonality");
    }
  return map;
}

enum class ElMode { conformal_class, steklov, mixed_bc, trace_identity };

inline std::string to_string(ElMode mode) {
  switch (mode) {
    case ElMode::conformal_class: return "conformal_class";
    case ElMode::steklov: return "steklov";
    case ElMode::mixed_bc: return "mixed_bc";
    case ElMode::trace_identity: return "trace_identity";
  }
  return "?";
}

inline ElMode parse_el_mode(const std::string& s) {
  if (s == "conformal_class") return ElMode::conformal_class;
  if (s == "steklov") return ElMode::steklov;
  if (s == "mixed_bc") return ElMode::mixed_bc;
  if (s == "trace_identity") return ElMode::trace_identity;
  fail(errc::argument, "unknown residual mode '" + s + "'");
}

// One named residual: sup and L2 seminorms plus the normalization that makes
// them comparable across meshes; rel() is the number tolerances act on.
struct ResidualEntry {
  std::string name;
  double sup = 0;
  double l2 = 0;
  double scale = 1;
  double rel() const { return scale > 0 ? sup / scale : sup; }
};

struct ResidualReport {
  std::string mode;
  std::vector<ResidualEntry> entries;
  double tolerance = -1;  // relative; negative means not configured
  double worst_rel = 0;
  bool pass = true;

  const ResidualEntry* find(const std::string& name) const {
    for (const auto& e : entries)
      if (e.name == name) return &e;
    return nullptr;
  }
};

namespace detail {

// Columns expanded to one row per mesh vertex, zero at constrained vertices.
inline Mat full_columns(const QuadricMap& map, int n_vertices) {
  if (map.dof_vertices.empty()) {
    require(map.Phi.rows() == n_vertices, errc::argument,
            "el residual: map rows do not match the mesh and no DOF map is set");
    return map.Phi;
  }
  require(static_cast<int>(map.dof_vertices.size()) == map.Phi.rows(), errc::argument,
          "el residual: DOF map length does not match the columns");
  Mat full = Mat::Zero(n_vertices, map.Phi.cols());
  for (int r = 0; r < map.Phi.rows(); ++r) {
    const int v = map.dof_vertices[static_cast<std::size_t>(r)];
    require(v >= 0 && v < n_vertices, errc::argument, "el residual: DOF map vertex out of range");
    full.row(v) = map.Phi.row(r);
  }
  return full;
}

// Pointwise quadric defect sum_k eps_k lambda_k phi_k(p)^2 - c / sc at the
// listed vertices, reduced to sup and measure-weighted L2.
inline ResidualEntry quadric_entry(const QuadricMap& map, const Mat& full,
                                   const std::vector<int>& verts, const Vec& measure,
                                   const std::string& name) {
  const double target = static_cast<double>(map.c) / map.sc;
  ResidualEntry e;
  e.name = name;
  double wsum = 0, acc = 0;
  for (std::size_t q = 0; q < verts.size(); ++q) {
    const int p = verts[q];
    double s = -target;
    for (int k = 0; k < full.cols(); ++k)
      s += map.eps[k] * map.lambda[k] * full(p, k) * full(p, k);
    e.sup = std::max(e.sup, std::abs(s));
    const double w = measure[static_cast<int>(q)];
    acc += w * s * s;
    wsum += w;
  }
  e.l2 = wsum > 0 ? std::sqrt(acc / wsum) : 0;
  if (map.c != 0) {
    e.scale = 1.0 / map.sc;
  } else {
    double ref = 0;
    for (int k = 0; k < full.cols(); ++k)
      ref = std::max(ref, std::abs(map.lambda[k]) * full.col(k).cwiseAbs2().maxCoeff());
    e.scale = std::max(ref, 1e-300);
  }
  return e;
}

}  // namespace detail

// Residuals of the Euler-Lagrange identities for a quadric map. Modes:
// conformal_class checks the pointwise quadric identity at every vertex,
// steklov checks it on the boundary plus interior harmonicity of the
// extension, mixed_bc adds Dirichlet-arc vanishing and Neumann-arc
// normal-derivative checks, trace_identity measures the per-triangle
// traceless part of sum_k eps_k dphi_k (x) dphi_k against the local
// Dirichlet energy density.
inline ResidualReport el_residual(const QuadricMap& map, const ParametricPencil& pencil,
                                  const SurfaceMesh& mesh, const Vec& x, ElMode mode,
                                  double rel_tolerance = -1) {
  require(!map.empty_map && map.columns() > 0, errc::argument,
          "el residual: empty quadric map");
  require(mode != ElMode::steklov || mesh.has_boundary(), errc::argument,
          "el residual: steklov mode on a closed mesh");
  require(mode != ElMode::mixed_bc || mesh.has_boundary(), errc::argument,
          "el residual: mixed mode needs a boundary");
  const int n = mesh.vertex_count();
  Mat full = detail::full_columns(map, n);

  ResidualReport report;
  report.mode = to_string(mode);
  report.tolerance = rel_tolerance;

  if (mode == ElMode::conformal_class || mode == ElMode::mixed_bc) {
    require(x.size() == n, errc::argument, "el residual: density length does not match mesh");
    std::vector<int> verts(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p) verts[static_cast<std::size_t>(p)] = p;
    Vec measure = vertex_areas(mesh).cwiseProduct(x);
    report.entries.push_back(detail::quadric_entry(map, full, verts, measure, "quadric_pointwise"));
  }

  if (mode == ElMode::steklov) {
    auto bverts = steklov_dof_vertices(mesh);
    Vec lumped = steklov_lumped_weights(mesh);
    require(x.size() == lumped.size(), errc::argument,
            "el residual: boundary density length does not match the boundary");
    Vec measure(lumped.size());
    for (int q = 0; q < lumped.size(); ++q) measure[q] = lumped[q] * x[q];
    report.entries.push_back(
        detail::quadric_entry(map, full, bverts, measure, "quadric_boundary"));

    // Interior harmonicity of the extension: rebuild it from the boundary
    // trace and apply the full stiffness, which must vanish off the boundary.
    auto cache = detail::build_fem_cache(mesh);
    std::set<int> bset(bverts.begin(), bverts.end());
    std::vector<int> interior;
    for (int v = 0; v < n; ++v)
      if (!bset.count(v)) interior.push_back(v);
    ResidualEntry eh;
    eh.name = "interior_harmonicity";
    if (!interior.empty()) {
      SpMat K_ii = detail::submatrix(cache->stiffness, interior, interior);
      SpMat K_ib = detail::submatrix(cache->stiffness, interior, bverts);
      Eigen::SimplicialLLT<SpMat> llt(K_ii);
      require(llt.info() == Eigen::Success, errc::numerical,
              "el residual: interior stiffness factorization failed");
      Mat ext = full;
      Mat boundary_rows = full(bverts, Eigen::all);
      Mat rhs = -(K_ib * boundary_rows);
      Mat sol = llt.solve(rhs);
      for (std::size_t q = 0; q < interior.size(); ++q)
        ext.row(interior[q]) = sol.row(static_cast<int>(q));
      Mat resid = cache->stiffness * ext;
      double knorm = 0;
      {
        Vec rk = Vec::Zero(n);
        for (int o = 0; o < cache->stiffness.outerSize(); ++o)
          for (SpMat::InnerIterator it(cache->stiffness, o); it; ++it)
            rk[it.row()] += std::abs(it.value());
        knorm = rk.maxCoeff();
      }
      double acc = 0;
      for (int v : interior) {
        const double r = resid.row(v).cwiseAbs().maxCoeff();
        eh.sup = std::max(eh.sup, r);
        acc += resid.row(v).squaredNorm();
      }
      eh.l2 = std::sqrt(acc / static_cast<double>(interior.size()));
      eh.scale = std::max(knorm * ext.cwiseAbs().maxCoeff(), 1e-300);
    }
    report.entries.push_back(eh);
  }

  if (mode == ElMode::mixed_bc) {
    // Flagged coordinates vanish on their Dirichlet arcs; zero rows there are
    // structural, so any leak points at a mis-built map.
    ResidualEntry ed;
    ed.name = "dirichlet_vanishing";
    double phimax = 0;
    for (int k = 0; k < full.cols(); ++k)
      phimax = std::max(phimax, full.col(k).cwiseAbs().maxCoeff());
    ed.scale = std::max(phimax, 1e-300);
    double acc_d = 0;
    int cnt_d = 0;
    for (int k = 0; k < full.cols(); ++k) {
      if (static_cast<std::size_t>(k) >= map.dirichlet_arcs.size()) break;
      for (const auto& arc : map.dirichlet_arcs[static_cast<std::size_t>(k)])
        for (int v : mesh.arc_vertex_set(arc)) {
          const double a = std::abs(full(v, k));
          ed.sup = std::max(ed.sup, a);
          acc_d += a * a;
          ++cnt_d;
        }
    }
    ed.l2 = cnt_d > 0 ? std::sqrt(acc_d / cnt_d) : 0;
    report.entries.push_back(ed);

    // Free-boundary condition: on each column's Neumann arcs the discrete
    // eigen-equation must hold at the boundary rows, which is the weak form
    // of the normal derivative pairing with the eigenvalue times the trace.
    auto cache = detail::build_fem_cache(mesh);
    std::vector<int> ident(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) ident[static_cast<std::size_t>(v)] = v;
    SpMat M_full = detail::restricted_mass(*cache, x, ident, n);
    auto bverts = mesh.boundary_vertices();
    ResidualEntry en;
    en.name = "neumann_flux";
    double acc_n = 0;
    int cnt_n = 0;
    for (int k = 0; k < full.cols(); ++k) {
      if (map.eps[k] == 0) continue;
      const Vec phi = full.col(k);
      const Vec r = cache->stiffness * phi - map.lambda[k] * (M_full * phi);
      std::set<int> skip;
      if (static_cast<std::size_t>(k) < map.dirichlet_arcs.size())
        for (const auto& arc : map.dirichlet_arcs[static_cast<std::size_t>(k)])
          for (int v : mesh.arc_vertex_set(arc)) skip.insert(v);
      for (int v : bverts) {
        if (skip.count(v)) continue;
        en.sup = std::max(en.sup, std::abs(r[v]));
        acc_n += r[v] * r[v];
        ++cnt_n;
      }
      const double colscale = (cache->stiffness * phi).cwiseAbs().maxCoeff() +
                              std::abs(map.lambda[k]) * (M_full * phi).cwiseAbs().maxCoeff();
      en.scale = std::max(en.scale, colscale);
    }
    en.l2 = cnt_n > 0 ? std::sqrt(acc_n / cnt_n) : 0;
    if (en.scale <= 0) en.scale = 1;
    report.entries.push_back(en);
  }

  if (mode == ElMode::trace_identity) {
    // Per triangle: gradients of the PL columns in an intrinsic orthonormal
    // frame; the traceless part of sum_k eps_k g_k g_k^T measures the
    // conformality deficit, normalized by the local Dirichlet energy density.
    double mean_energy = 0, area_sum = 0;
    std::vector<double> dev_norm(static_cast<std::size_t>(mesh.triangle_count()), 0.0);
    std::vector<double> energy(static_cast<std::size_t>(mesh.triangle_count()), 0.0);
    std::vector<double> area(static_cast<std::size_t>(mesh.triangle_count()), 0.0);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
      const Eigen::Vector3d p0 = mesh.vertices[static_cast<std::size_t>(tri[0])];
      const Eigen::Vector3d e1 = mesh.vertices[static_cast<std::size_t>(tri[1])] - p0;
      const Eigen::Vector3d e2 = mesh.vertices[static_cast<std::size_t>(tri[2])] - p0;
      const Eigen::Vector3d nrm = e1.cross(e2);
      const Eigen::Vector3d a1 = e1.normalized();
      const Eigen::Vector3d a2 = nrm.cross(e1).normalized();
      Eigen::Matrix2d B;
      B << e1.dot(a1), e2.dot(a1), e1.dot(a2), e2.dot(a2);
      const Eigen::Matrix2d Binv_t = B.inverse().transpose();

      double t00 = 0, t01 = 0, t11 = 0, en_t = 0;
      for (int k = 0; k < full.cols(); ++k) {
        const Eigen::Vector2d df(full(tri[1], k) - full(tri[0], k),
                                 full(tri[2], k) - full(tri[0], k));
        const Eigen::Vector2d g = Binv_t * df;
        en_t += 0.5 * g.squaredNorm();
        t00 += map.eps[k] * g[0] * g[0];
        t01 += map.eps[k] * g[0] * g[1];
        t11 += map.eps[k] * g[1] * g[1];
      }
      const double a = 0.5 * (t00 - t11), b = t01;
      dev_norm[static_cast<std::size_t>(t)] = std::sqrt(2.0 * (a * a + b * b));
      energy[static_cast<std::size_t>(t)] = en_t;
      area[static_cast<std::size_t>(t)] = mesh.triangle_area(t);
      mean_energy += area[static_cast<std::size_t>(t)] * en_t;
      area_sum += area[static_cast<std::size_t>(t)];
    }
    mean_energy = area_sum > 0 ? mean_energy / area_sum : 0;

    ResidualEntry ec;
    ec.name = "conformality";
    ec.scale = 1;  // already relative per triangle
    double acc = 0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
      const double guard = std::max(energy[static_cast<std::size_t>(t)], 1e-8 * mean_energy);
      const double r = guard > 0 ? dev_norm[static_cast<std::size_t>(t)] / guard : 0;
      ec.sup = std::max(ec.sup, r);
      acc += area[static_cast<std::size_t>(t)] * r * r;
    }
    ec.l2 = area_sum > 0 ? std::sqrt(acc / area_sum) : 0;
    report.entries.push_back(ec);
  }

  for (const auto& e : report.entries) report.worst_rel = std::max(report.worst_rel, e.rel());
  report.pass = rel_tolerance < 0 || report.worst_rel <= rel_tolerance;
  (void)pencil;
  return report;
}

// Joint quadric map of the sharp isoperimetric combination for the model:
// one block per boundary-condition problem, all sharing the normalization of
// the combined S and the common volume scaling. Columns live on all vertices.
inline QuadricMap hersch_el_candidate(const SurfaceMesh& mesh, const DensityField& beta) {
  beta.validate();
  struct Part {
    BoundaryConditionSpec bc;
    int k_hi;
    std::vector<std::string> arcs;
  };
  std::vector<Part> parts;
  auto pinned = [&mesh](const std::string& arc) {
    return BoundaryConditionSpec::dirichlet_on({arc}, mesh);
  };
  const std::string& model = mesh.generator;
  if (model == "sphere") {
    parts.push_back({BoundaryConditionSpec::all_neumann(), 3, {}});
  } else if (model == "half_sphere") {
    parts.push_back({pinned("z0"), 1, {"z0"}});
    parts.push_back({BoundaryConditionSpec::all_neumann(), 2, {}});
  } else if (model == "quadrant") {
    parts.push_back({pinned("y0"), 1, {"y0"}});
    parts.push_back({pinned("z0"), 1, {"z0"}});
    parts.push_back({BoundaryConditionSpec::all_neumann(), 1, {}});
  } else if (model == "octant") {
    parts.push_back({pinned("x0"), 1, {"x0"}});
    parts.push_back({pinned("y0"), 1, {"y0"}});
    parts.push_back({pinned("z0"), 1, {"z0"}});
  } else {
    fail(errc::argument, "no Hersch combination for model '" + model + "'");
  }

  ScalingSpec scaling = laplace_volume_scaling(mesh);
  const int n = mesh.vertex_count();

  struct Block {
    ParametricPencil pencil;
    ClusteredSpectrum spectrum;
    CombinationSpec combo;
    std::vector<int> dofs;
    std::vector<std::string> arcs;
    double S = 0;
  };
  std::vector<Block> blocks;
  double S_joint = 0;
  for (const Part& part : parts) {
    Block b;
    b.pencil = assemble_conformal_laplace(mesh, beta, part.bc);
    b.spectrum =
        solve_spectrum(b.pencil, beta.values, part.k_hi + b.pencil.expected_kernel_dim);
    b.combo = CombinationSpec::inverse_sum(part.k_hi);
    b.dofs = laplace_dof_vertices(mesh, part.bc);
    b.arcs = part.arcs;
    ComboState st = combination_state(b.spectrum, b.combo, scaling, beta.values);
    b.S = st.S;
    S_joint += st.S;
    blocks.push_back(std::move(b));
  }

  QuadricMap joint;
  joint.sc = scaling.value_at(beta.values);
  joint.S = S_joint;
  joint.c = S_joint > 0 ? 1 : (S_joint < 0 ? -1 : 0);
  joint.note = "joint map over the boundary-condition family";

  std::vector<Vec> cols;
  int cluster_offset = 0;
  for (const Block& b : blocks) {
    QuadricMap part_map = assemble_el_candidate(b.pencil, b.spectrum, b.combo, scaling,
                                                beta.values, {}, S_joint);
    for (int k = 0; k < part_map.columns(); ++k) {
      Vec col = Vec::Zero(n);
      for (int r = 0; r < part_map.Phi.rows(); ++r)
        col[b.dofs[static_cast<std::size_t>(r)]] = part_map.Phi(r, k);
      cols.push_back(std::move(col));
      joint.lambda.conservativeResize(joint.lambda.size() + 1);
      joint.lambda[joint.lambda.size() - 1] = part_map.lambda[k];
      joint.d_tilde.conservativeResize(joint.d_tilde.size() + 1);
      joint.d_tilde[joint.d_tilde.size() - 1] = part_map.d_tilde[k];
      joint.eps.conservativeResize(joint.eps.size() + 1);
      joint.eps[joint.eps.size() - 1] = part_map.eps[k];
      joint.cluster.push_back(cluster_offset + part_map.cluster[static_cast<std::size_t>(k)]);
      joint.dirichlet_arcs.push_back(b.arcs);
    }
    cluster_offset += static_cast<int>(b.spectrum.clusters.size());
  }
  joint.Phi.resize(n, static_cast<int>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k)
    joint.Phi.col(static_cast<int>(k)) = cols[k];
  return joint;
}

// Converse direction: weights delta on verified eigenfunctions, aggregated
// per cluster into A_i = sum_j delta_j alpha_j alpha_j^T over frame
// coordinates of the Q-normalized functions; its eigendecomposition yields
// the rotated frame and mixed weights, with the trace carrying sum delta.
struct ConverseCluster {
  int cluster = 0;
  Mat frame;    // mass-orthonormal columns, one per cluster slot
  Vec d_tilde;  // descending
  Vec d_plus, d_minus;
  double delta_sum = 0;
  double trace = 0;
  bool cancelled = false;  // weights cancel although delta does not vanish
};

struct ConverseResult {
  std::vector<ConverseCluster> clusters;
};

inline ConverseResult converse_weights(const ParametricPencil& pencil,
                                       const ClusteredSpectrum& spectrum, const Vec& x,
                                       const std::vector<std::pair<Vec, int>>& eigfuns,
                                       const Vec& delta) {
  require(!eigfuns.empty(), errc::argument, "converse: no eigenfunctions given");
  require(delta.size() == static_cast<int>(eigfuns.size()), errc::argument,
          "converse: weight count does not match the eigenfunctions");

  detail::PencilApply op(pencil, x);
  std::map<int, std::vector<std::pair<Vec, double>>> by_cluster;  // alpha, delta
  for (std::size_t j = 0; j < eigfuns.size(); ++j) {
    const Vec& phi = eigfuns[j].first;
    const int k = eigfuns[j].second;
    require(phi.size() == pencil.dim, errc::argument, "converse: eigenfunction length mismatch");
    require(phi.allFinite(), errc::argument, "converse: eigenfunction must be finite");
    require(k >= 1 && k <= spectrum.K(), errc::argument, "converse: eigenvalue index out of range");

    const int i = spectrum.cluster_of(k);
    const double mu = spectrum.clusters[static_cast<std::size_t>(i)].mu;
    const double width = detail::cluster_width(spectrum, i);
    const double resid = (op.K(phi) - mu * op.M(phi)).norm();
    const double bound =
        (1e-6 * (op.knorm + std::abs(mu) * op.mnorm) + 2.0 * width * op.mnorm) * phi.norm();
    if (resid > std::max(bound, 1e-300)) {
      std::ostringstream os;
      os << "converse: function " << j + 1 << " fails the eigen-residual test for cluster of k="
         << k << ", residual " << resid << " (allowed " << bound << ")";
      fail(errc::validation, os.str());
    }

    const double qn = std::sqrt(phi.dot(op.M(phi)));
    require(qn > 0, errc::validation, "converse: eigenfunction with zero mass norm");
    const Vec phat = phi / qn;
    const Mat U = spectrum.frame(i);
    by_cluster[i].push_back({U.transpose() * op.M(phat), delta[static_cast<int>(j)]});
  }

  ConverseResult out;
  for (const auto& [i, items] : by_cluster) {
    const int m = spectrum.clusters[static_cast<std::size_t>(i)].m();
    Mat A = Mat::Zero(m, m);
    double dsum = 0, dabs = 0;
    for (const auto& [alpha, dj] : items) {
      A.noalias() += dj * alpha * alpha.transpose();
      dsum += dj;
      dabs += std::abs(dj);
    }
    A = 0.5 * (A + A.transpose()).eval();

    Eigen::SelfAdjointEigenSolver<Mat> eig(A);
    require(eig.info() == Eigen::Success, errc::numerical, "converse: eigensolver failed");

    ConverseCluster cl;
    cl.cluster = i;
    cl.delta_sum = dsum;
    cl.trace = A.trace();
    cl.d_tilde.resize(m);
    cl.frame.resize(spectrum.frame(i).rows(), m);
    for (int l = 0; l < m; ++l) {
      cl.d_tilde[l] = eig.eigenvalues()[m - 1 - l];
      cl.frame.col(l) = spectrum.frame(i) * eig.eigenvectors().col(m - 1 - l);
    }
    cl.d_plus = cl.d_tilde.cwiseMax(0.0);
    cl.d_minus = (-cl.d_tilde).cwiseMax(0.0);
    cl.cancelled = dabs > 0 && cl.d_tilde.cwiseAbs().maxCoeff() <= 1e-12 * dabs;

    require(std::abs(cl.trace - cl.delta_sum) <= 1e-10 * std::max(1.0, dabs), errc::consistency,
            "converse: trace does not carry the weight sum");
    out.clusters.push_back(std::move(cl));
  }
  return out;
}

// Heuristic search over single-frame mixtures for the map with the smallest
// worst relative residual in the given mode. Best-effort only: the result is
// labeled, never certified.
inline QuadricMap search_el_mixture(const ParametricPencil& pencil,
                                    const ClusteredSpectrum& spectrum,
                                    const CombinationSpec& combo, const ScalingSpec& scaling,
                                    const Vec& x, const SurfaceMesh& mesh, ElMode mode,
                                    int attempts = 16, std::uint64_t seed = 0x5eed) {
  require(attempts >= 0, errc::argument, "el search: attempts must be >= 0");
  ComboState st = combination_state(spectrum, combo, scaling, x);
  std::vector<Vec> weights = detail::cluster_weights_for(spectrum, st.d, combo.N);
  const int first = spectrum.cluster_of(1);

  QuadricMap best = assemble_el_candidate(pencil, spectrum, combo, scaling, x);
  double best_rel =
      el_residual(best, pencil, mesh, x, mode).worst_rel;

  rng_t rng(seed);
  for (int a = 0; a < attempts; ++a) {
    std::map<int, std::vector<std::pair<double, Mat>>> mixtures;
    for (std::size_t q = 0; q < weights.size(); ++q) {
      const int m = static_cast<int>(weights[q].size());
      if (m < 2) continue;
      mixtures[first + static_cast<int>(q)] = {{1.0, random_orthogonal(rng, m)}};
    }
    if (mixtures.empty()) break;
    QuadricMap cand = assemble_el_candidate(pencil, spectrum, combo, scaling, x, mixtures);
    const double rel = el_residual(cand, pencil, mesh, x, mode).worst_rel;
    if (rel < best_rel) {
      best_rel = rel;
      best = std::move(cand);
    }
  }
  std::ostringstream os;
  os << "heuristic mixture search over " << attempts << " draws, best residual " << best_rel;
  best.note = os.str();
  return best;
}

}  // namespace eigencrit
