#include <catch2/catch_amalgamated.hpp>

#include <eigencrit/euler_lagrange.hpp>

#include <cmath>

#include "oracle.hpp"

using namespace eigencrit;

namespace {

// Density bump centered at p0; keeps the field strictly positive.
DensityField bump_density(const SurfaceMesh& mesh, const Eigen::Vector3d& p0, double amp,
                          double width) {
  DensityField beta = DensityField::constant(mesh.vertex_count());
  for (int v = 0; v < mesh.vertex_count(); ++v)
    beta.values[v] += amp * std::exp(-(mesh.vertices[size_t(v)] - p0).squaredNorm() / width);
  return beta;
}

double mass_product(const ParametricPencil& p, const Vec& x, const Vec& a, const Vec& b) {
  return a.dot(p.mass(x) * b);
}

// Quadratic of the pencil's directional derivative pairing at (u, mu).
double dir_quadratic(const ParametricPencil& p, const Vec& x, const Vec& h, double mu,
                     const Vec& u) {
  return u.dot(p.stiffness_dir(x, h) * u) - mu * u.dot(p.mass_dir(x, h) * u);
}

}  // namespace

TEST_CASE("single simple eigenvalue reduces to the normalized column") {
  rng_t rng(401);
  auto data = oracle::make_affine(rng, 7, 3, {1.0, 2.2, 3.4});
  ParametricPencil p = oracle::affine_pencil(data);
  Vec x = 0.05 * random_unit(rng, 3);

  auto spec = solve_spectrum(p, x, 3);
  auto combo = CombinationSpec::single(1);
  auto scaling = ScalingSpec::none_scaling();
  QuadricMap map = assemble_el_candidate(p, spec, combo, scaling, x);

  REQUIRE(map.columns() == 1);
  REQUIRE_FALSE(map.empty_map);
  CHECK(map.eps[0] == 1);
  CHECK(map.c == 1);
  CHECK(map.d_tilde[0] == Catch::Approx(1.0).margin(1e-14));
  CHECK(map.lambda[0] == Catch::Approx(spec.lambda(1)).epsilon(1e-12));
  CHECK(map.S == Catch::Approx(spec.lambda(1)).epsilon(1e-12));

  // eq:normal with d_tilde = 1: mass-norm^2 of the column is 1/lambda_1.
  const double q = mass_product(p, x, map.Phi.col(0), map.Phi.col(0));
  CHECK(q == Catch::Approx(1.0 / spec.lambda(1)).epsilon(1e-12));
}

TEST_CASE("zero-S combination takes the branch without division") {
  rng_t rng(402);
  auto data = oracle::make_affine(rng, 7, 3, {1.0, 2.2, 3.4});
  ParametricPencil p = oracle::affine_pencil(data);
  Vec x = Vec::Zero(3);

  auto spec = solve_spectrum(p, x, 3);
  const double l1 = spec.lambda(1), l2 = spec.lambda(2);
  Vec w(2);
  w << l2, -l1;  // S = l2*l1 - l1*l2 = 0 exactly
  auto combo = CombinationSpec::weighted(w);
  QuadricMap map = assemble_el_candidate(p, spec, combo, ScalingSpec::none_scaling(), x);

  REQUIRE(map.columns() == 2);
  CHECK(map.S == 0.0);
  CHECK(map.c == 0);
  CHECK(map.eps[0] == 1);
  CHECK(map.eps[1] == -1);
  for (int k = 0; k < 2; ++k) {
    const double q = mass_product(p, x, map.Phi.col(k), map.Phi.col(k));
    CHECK(q == Catch::Approx(std::abs(map.d_tilde[k])).epsilon(1e-12));
  }
}

TEST_CASE("equal-weight cluster keeps equal masses and orthogonality") {
  rng_t rng(403);
  auto data = oracle::make_affine(rng, 8, 3, {1.0, 1.0, 2.5});
  ParametricPencil p = oracle::affine_pencil(data);
  Vec x = Vec::Zero(3);

  auto spec = solve_spectrum(p, x, 4);
  REQUIRE(spec.cluster_of(1) == spec.cluster_of(2));
  auto combo = CombinationSpec::sum(2);
  QuadricMap map = assemble_el_candidate(p, spec, combo, ScalingSpec::none_scaling(), x);

  REQUIRE(map.columns() == 2);
  CHECK(map.eps[0] == 1);
  CHECK(map.eps[1] == 1);
  const double q0 = mass_product(p, x, map.Phi.col(0), map.Phi.col(0));
  const double q1 = mass_product(p, x, map.Phi.col(1), map.Phi.col(1));
  CHECK(q0 == Catch::Approx(1.0 / map.S).epsilon(1e-10));
  CHECK(q1 == Catch::Approx(1.0 / map.S).epsilon(1e-10));
  CHECK(std::abs(mass_product(p, x, map.Phi.col(0), map.Phi.col(1))) < 1e-10);
}

TEST_CASE("mixtures reproduce the convex-combination quadratics") {
  rng_t rng(404);
  auto data = oracle::make_affine(rng, 9, 4, {2.0, 2.0, 2.0});
  ParametricPencil p = oracle::affine_pencil(data);
  Vec x = Vec::Zero(4);

  auto spec = solve_spectrum(p, x, 5);
  const int i0 = spec.cluster_of(1);
  REQUIRE(spec.clusters[size_t(i0)].m() == 3);
  const double mu = spec.clusters[size_t(i0)].mu;

  Vec w(3);
  w << 0.9, 0.5, 0.1;
  auto combo = CombinationSpec::weighted(w);

  Mat O1 = random_orthogonal(rng, 3), O2 = random_orthogonal(rng, 3);
  std::map<int, std::vector<std::pair<double, Mat>>> mixtures;
  mixtures[i0] = {{0.6, O1}, {0.4, O2}};
  QuadricMap map =
      assemble_el_candidate(p, spec, combo, ScalingSpec::none_scaling(), x, mixtures);
  REQUIRE(map.columns() == 3);

  Mat U = spec.frame(i0);
  for (int trial = 0; trial < 20; ++trial) {
    Vec h = random_unit(rng, 4);

    double lhs = 0;
    for (int k = 0; k < 3; ++k) {
      if (map.eps[k] == 0) continue;
      const double mass = mass_product(p, x, map.Phi.col(k), map.Phi.col(k));
      const Vec u = map.Phi.col(k) / std::sqrt(mass);
      lhs += map.d_tilde[k] * dir_quadratic(p, x, h, mu, u);
    }

    double rhs = 0;
    for (const auto& [t, O] : mixtures[i0])
      for (int q = 0; q < 3; ++q) {
        const Vec uq = U * O.col(q);
        rhs += t * w[q] * dir_quadratic(p, x, h, mu, uq);
      }

    const double scale = std::max(std::abs(lhs) + std::abs(rhs), 1.0);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * scale);
  }
}

TEST_CASE("all-zero weights produce an empty map, not an error") {
  rng_t rng(405);
  auto data = oracle::make_affine(rng, 6, 2, {1.0, 2.0});
  ParametricPencil p = oracle::affine_pencil(data);
  Vec x = Vec::Zero(2);
  auto spec = solve_spectrum(p, x, 2);

  Vec w = Vec::Zero(2);
  QuadricMap map =
      assemble_el_candidate(p, spec, CombinationSpec::weighted(w), ScalingSpec::none_scaling(), x);
  CHECK(map.empty_map);
  CHECK(map.columns() == 0);
  CHECK_FALSE(map.note.empty());

  SurfaceMesh mesh = generate_domain("sphere", 1);
  CHECK_THROWS_AS(
      el_residual(map, p, mesh, Vec::Ones(mesh.vertex_count()), ElMode::conformal_class), error);
}

TEST_CASE("Takahashi identity holds on the round sphere to the floor") {
  SurfaceMesh mesh = generate_domain("sphere", 3);
  DensityField beta = DensityField::constant(mesh.vertex_count());
  auto pencil = assemble_conformal_laplace(mesh, beta, BoundaryConditionSpec::all_neumann());
  auto scaling = laplace_volume_scaling(mesh);
  auto spec = solve_spectrum(pencil, beta.values, 3 + pencil.expected_kernel_dim);

  SECTION("sum combination, eps = +1") {
    QuadricMap map =
        assemble_el_candidate(pencil, spec, CombinationSpec::sum(3), scaling, beta.values);
    REQUIRE(map.columns() == 3);
    for (int k = 0; k < 3; ++k) CHECK(map.eps[k] == 1);
    CHECK(map.c == 1);

    auto rep = el_residual(map, pencil, mesh, beta.values, ElMode::conformal_class, 0.01);
    const auto* q = rep.find("quadric_pointwise");
    REQUIRE(q != nullptr);
    CHECK(q->rel() <= 0.01);
    CHECK(rep.pass);
  }

  SECTION("Hersch combination, eps = -1") {
    QuadricMap map = assemble_el_candidate(pencil, spec, CombinationSpec::inverse_sum(3), scaling,
                                           beta.values);
    REQUIRE(map.columns() == 3);
    for (int k = 0; k < 3; ++k) {
      CHECK(map.eps[k] == -1);
      CHECK(map.d_tilde[k] < 0);
    }
    CHECK(map.c == -1);

    auto rep = el_residual(map, pencil, mesh, beta.values, ElMode::conformal_class);
    REQUIRE(rep.find("quadric_pointwise") != nullptr);
    CHECK(rep.find("quadric_pointwise")->rel() <= 0.01);
  }

  SECTION("conformality of the degree-1 eigenmap") {
    QuadricMap map =
        assemble_el_candidate(pencil, spec, CombinationSpec::sum(3), scaling, beta.values);
    auto rep = el_residual(map, pencil, mesh, beta.values, ElMode::trace_identity);
    const auto* c = rep.find("conformality");
    REQUIRE(c != nullptr);
    CHECK(c->rel() <= 0.02);
  }
}

TEST_CASE("non-critical density lifts the residual well off the floor") {
  SurfaceMesh mesh = generate_domain("sphere", 3);
  auto scaling = laplace_volume_scaling(mesh);

  DensityField round = DensityField::constant(mesh.vertex_count());
  auto pr = assemble_conformal_laplace(mesh, round, BoundaryConditionSpec::all_neumann());
  auto sr = solve_spectrum(pr, round.values, 3 + pr.expected_kernel_dim);
  QuadricMap mr = assemble_el_candidate(pr, sr, CombinationSpec::sum(3), scaling, round.values);
  const double floor =
      el_residual(mr, pr, mesh, round.values, ElMode::conformal_class).worst_rel;

  DensityField bumped = bump_density(mesh, Eigen::Vector3d(0, 0, 1), 0.4, 0.25);
  auto pb = assemble_conformal_laplace(mesh, bumped, BoundaryConditionSpec::all_neumann());
  auto sb = solve_spectrum(pb, bumped.values, 3 + pb.expected_kernel_dim);
  QuadricMap mb = assemble_el_candidate(pb, sb, CombinationSpec::sum(3), scaling, bumped.values);
  const double lifted =
      el_residual(mb, pb, mesh, bumped.values, ElMode::conformal_class).worst_rel;

  CHECK(lifted >= 10.0 * floor);
}

TEST_CASE("Steklov disk: boundary quadric, interior harmonicity, closed-mesh guard") {
  SurfaceMesh mesh = generate_domain("flat_disk", 4);
  auto bverts = steklov_dof_vertices(mesh);
  DensityField beta = DensityField::constant(int(bverts.size()));
  auto pencil = assemble_steklov(mesh, beta);
  auto scaling = steklov_perimeter_scaling(mesh);
  auto spec = solve_spectrum(pencil, beta.values, 2 + pencil.expected_kernel_dim);

  QuadricMap map =
      assemble_el_candidate(pencil, spec, CombinationSpec::sum(2), scaling, beta.values);
  map.dof_vertices = bverts;
  REQUIRE(map.columns() == 2);

  auto rep = el_residual(map, pencil, mesh, beta.values, ElMode::steklov);
  const auto* q = rep.find("quadric_boundary");
  REQUIRE(q != nullptr);
  CHECK(q->rel() <= 0.02);
  const auto* h = rep.find("interior_harmonicity");
  REQUIRE(h != nullptr);
  CHECK(h->rel() <= 1e-8);

  SurfaceMesh closed = generate_domain("sphere", 1);
  CHECK_THROWS_WITH(
      el_residual(map, pencil, closed, Vec::Ones(closed.vertex_count()), ElMode::steklov),
      Catch::Matchers::ContainsSubstring("closed"));
}

TEST_CASE("joint Hersch map on the octant satisfies the mixed identities") {
  SurfaceMesh mesh = generate_domain("octant", 4);
  DensityField beta = DensityField::constant(mesh.vertex_count());
  QuadricMap map = hersch_el_candidate(mesh, beta);

  REQUIRE(map.columns() == 3);
  CHECK(map.c == -1);
  for (int k = 0; k < 3; ++k) CHECK(map.eps[k] == -1);
  REQUIRE(map.dirichlet_arcs.size() == 3);
  CHECK(map.dirichlet_arcs[0] == std::vector<std::string>{"x0"});

  // Any pencil argument works here: the mixed mode rebuilds its operators
  // from the mesh. Use a Neumann assembly for the signature.
  auto pencil = assemble_conformal_laplace(mesh, beta, BoundaryConditionSpec::all_neumann());
  auto rep = el_residual(map, pencil, mesh, beta.values, ElMode::mixed_bc);

  const auto* q = rep.find("quadric_pointwise");
  REQUIRE(q != nullptr);
  CHECK(q->rel() <= 0.05);
  const auto* d = rep.find("dirichlet_vanishing");
  REQUIRE(d != nullptr);
  CHECK(d->sup == 0.0);  // structural zeros at constrained vertices
  const auto* nm = rep.find("neumann_flux");
  REQUIRE(nm != nullptr);
  CHECK(nm->rel() <= 1e-6);
}

TEST_CASE("hersch_el_candidate rejects models without a combination") {
  SurfaceMesh mesh = generate_domain("flat_disk", 2);
  DensityField beta = DensityField::constant(mesh.vertex_count());
  CHECK_THROWS_WITH(hersch_el_candidate(mesh, beta),
                    Catch::Matchers::ContainsSubstring("no Hersch combination"));
}

TEST_CASE("converse recovers the trivial single-function weights") {
  rng_t rng(406);
  auto data = oracle::make_affine(rng, 7, 3, {1.0, 2.2, 3.4});
  ParametricPencil p = oracle::affine_pencil(data);
  Vec x = 0.04 * random_unit(rng, 3);
  auto spec = solve_spectrum(p, x, 3);

  Vec phi = 2.5 * spec.vector(1);
  Vec delta(1);
  delta << 1.0;
  auto res = converse_weights(p, spec, x, {{phi, 1}}, delta);

  REQUIRE(res.clusters.size() == 1);
  const auto& cl = res.clusters[0];
  CHECK(cl.cluster == spec.cluster_of(1));
  REQUIRE(cl.d_tilde.size() == 1);
  CHECK(cl.d_tilde[0] == Catch::Approx(1.0).margin(1e-10));
  CHECK(cl.trace == Catch::Approx(cl.delta_sum).margin(1e-10));
  CHECK(cl.d_plus[0] == Catch::Approx(1.0).margin(1e-10));
  CHECK(cl.d_minus[0] == 0.0);
  CHECK_FALSE(cl.cancelled);

  // u = phi / ||phi||_Q up to sign.
  const double qn = std::sqrt(mass_product(p, x, phi, phi));
  CHECK(std::abs(std::abs(cl.frame.col(0).dot(p.mass(x) * (phi / qn))) - 1.0) < 1e-10);
}

TEST_CASE("converse on two non-orthogonal functions matches both functional sides") {
  rng_t rng(407);
  auto data = oracle::make_affine(rng, 9, 4, {2.0, 2.0, 2.0});
  ParametricPencil p = oracle::affine_pencil(data);
  Vec x = Vec::Zero(4);
  auto spec = solve_spectrum(p, x, 5);
  const int i0 = spec.cluster_of(1);
  const double mu = spec.clusters[size_t(i0)].mu;
  Mat U = spec.frame(i0);

  Vec phi1 = U.col(0);
  Vec phi2 = (0.8 * U.col(0) + 0.6 * U.col(1)).eval();  // unit, not orthogonal to phi1
  Vec delta(2);
  delta << 1.0, 1.0;
  auto res = converse_weights(p, spec, x, {{phi1, 1}, {phi2, 2}}, delta);

  REQUIRE(res.clusters.size() == 1);
  const auto& cl = res.clusters[0];
  CHECK(cl.d_tilde.sum() == Catch::Approx(2.0).margin(1e-10));
  Mat G = cl.frame.transpose() * p.mass(x) * cl.frame;
  CHECK((G - Mat::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-10);

  // eq:converseEL on 20 random directions: the delta side against the
  // d_tilde side, both through the same pairing quadratic.
  for (int trial = 0; trial < 20; ++trial) {
    Vec h = random_unit(rng, 4);
    double lhs = dir_quadratic(p, x, h, mu, phi1) + dir_quadratic(p, x, h, mu, phi2);
    double rhs = 0;
    for (int k = 0; k < 3; ++k)
      rhs += cl.d_tilde[k] * dir_quadratic(p, x, h, mu, cl.frame.col(k));
    CHECK(std::abs(lhs - rhs) <= 1e-8 * std::max(1.0, std::abs(lhs)));
  }
}

TEST_CASE("converse flags exact cancellation") {
  rng_t rng(408);
  auto data = oracle::make_affine(rng, 8, 3, {2.0, 2.0, 2.0});
  ParametricPencil p = oracle::affine_pencil(data);
  Vec x = Vec::Zero(3);
  auto spec = solve_spectrum(p, x, 4);

  Vec phi = spec.vector(2);
  Vec delta(2);
  delta << 1.0, -1.0;
  auto res = converse_weights(p, spec, x, {{phi, 2}, {phi, 2}}, delta);

  REQUIRE(res.clusters.size() == 1);
  CHECK(res.clusters[0].cancelled);
  CHECK(res.clusters[0].d_tilde.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(res.clusters[0].delta_sum) < 1e-14);
}

TEST_CASE("converse rejects functions outside the claimed cluster") {
  rng_t rng(409);
  auto data = oracle::make_affine(rng, 8, 3, {2.0, 2.0, 2.0});
  ParametricPencil p = oracle::affine_pencil(data);
  Vec x = Vec::Zero(3);
  auto spec = solve_spectrum(p, x, 5);
  REQUIRE(spec.cluster_of(4) != spec.cluster_of(1));

  Vec phi = spec.vector(4);  // genuinely outside the first cluster
  Vec delta(1);
  delta << 1.0;
  CHECK_THROWS_WITH(converse_weights(p, spec, x, {{phi, 1}}, delta),
                    Catch::Matchers::ContainsSubstring("eigen-residual"));
}

TEST_CASE("converse composed with assemble round-trips the mixed weights") {
  rng_t rng(410);
  auto data = oracle::make_affine(rng, 9, 3, {2.0, 2.0, 2.0});
  ParametricPencil p = oracle::affine_pencil(data);
  Vec x = Vec::Zero(3);
  auto spec = solve_spectrum(p, x, 5);

  Vec w(3);
  w << 0.8, 0.35, -0.15;
  QuadricMap map =
      assemble_el_candidate(p, spec, CombinationSpec::weighted(w), ScalingSpec::none_scaling(), x);
  REQUIRE(map.columns() == 3);

  std::vector<std::pair<Vec, int>> funs;
  for (int k = 0; k < 3; ++k) funs.push_back({Vec(map.Phi.col(k)), 1});
  auto res = converse_weights(p, spec, x, funs, map.d_tilde);

  REQUIRE(res.clusters.size() == 1);
  Vec got = res.clusters[0].d_tilde;
  std::vector<double> want(w.data(), w.data() + 3);
  std::sort(want.begin(), want.end(), std::greater<>());
  REQUIRE(got.size() == 3);
  for (int k = 0; k < 3; ++k) CHECK(got[k] == Catch::Approx(want[size_t(k)]).margin(1e-9));
}

TEST_CASE("mixture search never does worse than the identity mixture") {
  SurfaceMesh mesh = generate_domain("sphere", 2);
  DensityField beta = DensityField::constant(mesh.vertex_count());
  auto pencil = assemble_conformal_laplace(mesh, beta, BoundaryConditionSpec::all_neumann());
  auto scaling = laplace_volume_scaling(mesh);
  auto spec = solve_spectrum(pencil, beta.values, 3 + pencil.expected_kernel_dim);
  auto combo = CombinationSpec::sum(3);

  QuadricMap base = assemble_el_candidate(pencil, spec, combo, scaling, beta.values);
  const double base_rel =
      el_residual(base, pencil, mesh, beta.values, ElMode::conformal_class).worst_rel;

  QuadricMap best = search_el_mixture(pencil, spec, combo, scaling, beta.values, mesh,
                                      ElMode::conformal_class, 4, 99);
  const double best_rel =
      el_residual(best, pencil, mesh, beta.values, ElMode::conformal_class).worst_rel;

  CHECK(best_rel <= base_rel + 1e-12);
  CHECK_THAT(best.note, Catch::Matchers::ContainsSubstring("heuristic"));
}
