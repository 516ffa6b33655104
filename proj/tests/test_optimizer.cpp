#include <catch2/catch_amalgamated.hpp>

#include <eigencrit/fem.hpp>
#include <eigencrit/optimizer.hpp>

#include "oracle.hpp"

using namespace eigencrit;

namespace {

// Combination value as the optimizer computes it: combo.evaluate over the
// normalized eigenvalues at x.
double combo_value(const ParametricPencil& pencil, const CombinationSpec& combo,
                   const ScalingSpec& scaling, const Vec& x, int k_max) {
  ClusteredSpectrum s = solve_spectrum(pencil, x, k_max);
  ComboState st = combination_state(s, combo, scaling, x);
  return combo.evaluate(st.lambda_bar);
}

ScalingSpec affine_scaling(const Vec& w) {
  ScalingSpec s;
  s.kind = ScalingSpec::Kind::density_lp;
  s.value = [w](const Vec& x) { return 1.0 + w.dot(x); };
  s.gradient = [w](const Vec&) { return w; };
  return s;
}

DensityField bumped_density(const SurfaceMesh& mesh, double amp, double width,
                            const Eigen::Vector3d& p0) {
  DensityField b = DensityField::constant(mesh.vertex_count());
  for (int v = 0; v < mesh.vertex_count(); ++v)
    b.values[v] += amp * std::exp(-(mesh.vertices[static_cast<size_t>(v)] - p0).squaredNorm() /
                                  width);
  return b;
}

}  // namespace

TEST_CASE("subgradient matches finite differences on a simple spectrum") {
  oracle::rng_t rng(401);
  auto data = oracle::make_affine(rng, 8, 4, {1.0, 1.9, 3.1});
  ParametricPencil pencil = oracle::affine_pencil(data);
  Vec x0(4);
  x0 << 0.2, -0.1, 0.15, 0.05;
  CombinationSpec combo = CombinationSpec::weighted((Vec(2) << 0.7, 0.3).finished());

  SECTION("without scaling") {
    ScalingSpec scaling = ScalingSpec::none_scaling();
    ClusteredSpectrum s = solve_spectrum(pencil, x0, 3);
    Vec g = subgradient(pencil, s, combo, scaling, x0);
    auto f = [&](const Vec& p) { return combo_value(pencil, combo, scaling, p, 3); };
    for (int j = 0; j < 4; ++j) {
      Vec e = Vec::Zero(4);
      e[j] = 1;
      const double fd = oracle::fd_central(f, x0, e, 1e-4);
      CHECK(std::abs(g[j] - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }
  }

  SECTION("with a differentiable scaling") {
    Vec w(4);
    w << 0.3, -0.2, 0.1, 0.25;
    ScalingSpec scaling = affine_scaling(w);
    ClusteredSpectrum s = solve_spectrum(pencil, x0, 3);
    Vec g = subgradient(pencil, s, combo, scaling, x0);
    auto f = [&](const Vec& p) { return combo_value(pencil, combo, scaling, p, 3); };
    for (int j = 0; j < 4; ++j) {
      Vec e = Vec::Zero(4);
      e[j] = 1;
      const double fd = oracle::fd_central(f, x0, e, 1e-4);
      CHECK(std::abs(g[j] - fd) <= 1e-3 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("constant pencil subgradient is the scaling term alone") {
  oracle::rng_t rng(402);
  auto data = oracle::make_affine(rng, 6, 3, {1.0, 2.0, 3.0});
  for (auto& m : data->KJ) m.setZero();
  for (auto& m : data->MJ) m.setZero();
  ParametricPencil pencil = oracle::affine_pencil(data);

  Vec w(3);
  w << 0.4, 0.1, -0.2;
  ScalingSpec scaling = affine_scaling(w);
  Vec x0(3);
  x0 << 0.3, 0.2, 0.1;

  CombinationSpec combo = CombinationSpec::sum(2);
  ClusteredSpectrum s = solve_spectrum(pencil, x0, 3);
  ComboState st = combination_state(s, combo, scaling, x0);
  Vec g = subgradient(pencil, s, combo, scaling, x0);
  CHECK((g - st.S * w).norm() <= 1e-13 * std::max(1.0, std::abs(st.S) * w.norm()));
}

TEST_CASE("scale-invariant combination gives a tangent direction") {
  SurfaceMesh mesh = generate_domain("sphere", 2);
  DensityField beta = bumped_density(mesh, 0.2, 0.3, {0, 0, 1});
  ParametricPencil pencil =
      assemble_conformal_laplace(mesh, beta, BoundaryConditionSpec::all_neumann());
  ScalingSpec scaling = laplace_volume_scaling(mesh);

  ClusteredSpectrum s = solve_spectrum(pencil, beta.values, 2);
  Vec g = subgradient(pencil, s, CombinationSpec::single(1), scaling, beta.values);
  REQUIRE(g.norm() > 0);
  // lambda(t*beta) = lambda(beta)/t and sc(t*beta) = t*sc(beta), so the
  // normalized eigenvalue is constant along the ray through beta.
  CHECK(std::abs(g.dot(beta.values)) <= 1e-8 * g.norm() * beta.values.norm());
}

TEST_CASE("maximize the first normalized eigenvalue on the sphere") {
  SurfaceMesh mesh = generate_domain("sphere", 3);
  DensityField beta0 = bumped_density(mesh, 0.3, 0.25, {0, 0, 1});
  ParametricPencil pencil =
      assemble_conformal_laplace(mesh, beta0, BoundaryConditionSpec::all_neumann());

  OptimizeConfig cfg;
  cfg.combo = CombinationSpec::single(1);
  cfg.scaling = laplace_volume_scaling(mesh);
  cfg.sense = OptimizeConfig::Sense::ascend;
  cfg.step = 0.05;
  cfg.max_iters = 40;
  cfg.normalize = true;
  cfg.l1_measure = vertex_areas(mesh);
  cfg.margin_every = 10;
  cfg.cluster_tol = 1e-2;  // track the triple cluster forming at the round metric
  cfg.cert.random_starts = 12;
  cfg.cert.ascent_steps = 25;
  cfg.seed = 7;

  OptimizeResult res = optimize(pencil, beta0.values, cfg);

  const double target = 8 * M_PI;
  CHECK(std::abs(res.trajectory.values.back() - target) <= 0.02 * target);

  REQUIRE(res.trajectory.margins.size() >= 2);
  const double first_margin = res.trajectory.margins.front().second;
  const double last_margin = res.trajectory.margins.back().second;
  CHECK(last_margin <= 0.1 * first_margin);

  // The run ends because the margin probe certifies near-criticality.
  CHECK(res.trajectory.stop_reason == "margin tolerance");
  CHECK(res.certificate.sup_s_min <= res.certificate.tol);
  CHECK(res.certificate.verdict == CriticalityReport::Verdict::no_witness_found);

  CHECK(res.beta.minCoeff() >= cfg.floor - 1e-15);
  const Vec areas = vertex_areas(mesh);
  CHECK(std::abs(areas.dot(res.beta.cwiseAbs()) - areas.dot(beta0.values.cwiseAbs())) <=
        1e-8 * areas.dot(beta0.values.cwiseAbs()));
}

TEST_CASE("descend the Hersch combination on the sphere") {
  SurfaceMesh mesh = generate_domain("sphere", 3);
  DensityField beta0 = bumped_density(mesh, 0.3, 0.25, {0, 0, 1});
  ParametricPencil pencil =
      assemble_conformal_laplace(mesh, beta0, BoundaryConditionSpec::all_neumann());

  OptimizeConfig cfg;
  cfg.combo = CombinationSpec::inverse_sum(3);
  cfg.scaling = laplace_volume_scaling(mesh);
  cfg.sense = OptimizeConfig::Sense::descend;
  cfg.step = 20.0;
  cfg.max_iters = 40;
  cfg.normalize = true;
  cfg.l1_measure = vertex_areas(mesh);
  cfg.margin_every = 10;
  cfg.margin_tol = 0;  // run to the cap; monotonicity is the point here
  cfg.cert.random_starts = 8;
  cfg.cert.ascent_steps = 20;
  cfg.seed = 7;

  OptimizeResult res = optimize(pencil, beta0.values, cfg);

  const auto& v = res.trajectory.values;
  REQUIRE(v.size() >= 2);
  int ups = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1]) ++ups;
  // Monotone decrease up to schedule noise.
  CHECK(ups <= static_cast<int>(v.size()) / 5);
  CHECK(v.back() <= v.front());

  const double target = 3.0 / (8 * M_PI);
  CHECK(std::abs(v.back() - target) <= 0.02 * target);
}

TEST_CASE("zero step schedule leaves the density fixed") {
  oracle::rng_t rng(403);
  auto data = oracle::make_affine(rng, 6, 3, {1.0, 2.1, 3.3});
  ParametricPencil pencil = oracle::affine_pencil(data);
  Vec x0(3);
  x0 << 0.3, 0.2, 0.5;

  OptimizeConfig cfg;
  cfg.combo = CombinationSpec::single(1);
  cfg.step = 0.0;
  cfg.max_iters = 7;
  cfg.margin_tol = 0;
  cfg.cert.random_starts = 4;
  cfg.cert.ascent_steps = 5;

  OptimizeResult res = optimize(pencil, x0, cfg);
  CHECK(res.trajectory.stop_reason == "iteration cap");
  CHECK(res.trajectory.iterations == 7);
  CHECK(res.trajectory.values.size() == 7);
  REQUIRE(res.beta.size() == x0.size());
  CHECK((res.beta.array() == x0.array()).all());
  // All logged iterates are the same point.
  for (std::uint64_t h : res.trajectory.hashes) CHECK(h == res.trajectory.hashes.front());
}

TEST_CASE("projection keeps the floor under aggressive descent") {
  SurfaceMesh mesh = generate_domain("sphere", 2);
  DensityField beta0 = bumped_density(mesh, 0.2, 0.3, {1, 0, 0});
  ParametricPencil pencil =
      assemble_conformal_laplace(mesh, beta0, BoundaryConditionSpec::all_neumann());

  OptimizeConfig cfg;
  cfg.combo = CombinationSpec::single(1);
  cfg.scaling = laplace_volume_scaling(mesh);
  cfg.sense = OptimizeConfig::Sense::descend;
  cfg.step = 2.0;
  cfg.max_iters = 12;
  cfg.floor = 0.8;
  cfg.normalize = true;
  cfg.margin_tol = 0;
  cfg.cert.random_starts = 4;
  cfg.cert.ascent_steps = 5;

  OptimizeResult res = optimize(pencil, beta0.values, cfg);
  CHECK(res.beta.minCoeff() >= cfg.floor - 1e-12);
  for (std::size_t i = 0; i < res.trajectory.values.size(); ++i)
    CHECK(std::isfinite(res.trajectory.values[i]));
}

TEST_CASE("iteration aborts when a step leaves the admissible set") {
  oracle::rng_t rng(404);
  auto data = oracle::make_affine(rng, 6, 4, {1.0, 2.0, 3.2});
  ParametricPencil pencil = oracle::affine_pencil(data);
  Vec x0 = Vec::Constant(4, 0.9);  // norm 1.8, close to the admissible boundary

  OptimizeConfig cfg;
  cfg.combo = CombinationSpec::sum(2);
  cfg.step = 50.0;
  cfg.max_iters = 20;
  cfg.margin_tol = 0;
  cfg.cert.random_starts = 4;
  cfg.cert.ascent_steps = 5;

  OptimizeResult res = optimize(pencil, x0, cfg);
  CHECK(res.trajectory.stop_reason == "projection left the admissible set");
  CHECK(res.trajectory.iterations < cfg.max_iters);
  // The returned iterate is the last valid one.
  CHECK(pencil.admissible(res.beta));
}

TEST_CASE("small constant steps change the value at first order") {
  oracle::rng_t rng(405);
  auto data = oracle::make_affine(rng, 8, 4, {1.0, 1.8, 2.9});
  ParametricPencil pencil = oracle::affine_pencil(data);
  Vec x0 = Vec::Constant(4, 0.4);

  OptimizeConfig cfg;
  cfg.combo = CombinationSpec::sum(2);
  cfg.step = 1e-3;
  cfg.max_iters = 10;
  cfg.margin_tol = 0;
  cfg.margin_every = 100;
  cfg.cert.random_starts = 4;
  cfg.cert.ascent_steps = 5;

  OptimizeResult res = optimize(pencil, x0, cfg);
  REQUIRE(res.trajectory.iterations == 10);
  double rel_sum = 0;
  int count = 0;
  for (int t = 0; t + 1 < 10; ++t) {
    const double df = res.trajectory.values[static_cast<std::size_t>(t) + 1] -
                      res.trajectory.values[static_cast<std::size_t>(t)];
    const double predicted =
        cfg.step * res.trajectory.grad_norms[static_cast<std::size_t>(t)] *
        res.trajectory.grad_norms[static_cast<std::size_t>(t)];
    REQUIRE(predicted > 0);
    rel_sum += std::abs(df - predicted) / predicted;
    ++count;
  }
  CHECK(rel_sum / count <= 0.1);
}

TEST_CASE("identical runs produce identical trajectories") {
  SurfaceMesh mesh = generate_domain("sphere", 2);
  DensityField beta0 = bumped_density(mesh, 0.25, 0.3, {0, 1, 0});
  ParametricPencil pencil =
      assemble_conformal_laplace(mesh, beta0, BoundaryConditionSpec::all_neumann());

  OptimizeConfig cfg;
  cfg.combo = CombinationSpec::single(1);
  cfg.scaling = laplace_volume_scaling(mesh);
  cfg.step = 0.05;
  cfg.max_iters = 8;
  cfg.normalize = true;
  cfg.l1_measure = vertex_areas(mesh);
  cfg.margin_every = 4;
  cfg.margin_tol = 0;
  cfg.cert.random_starts = 6;
  cfg.cert.ascent_steps = 10;
  cfg.seed = 99;

  OptimizeResult a = optimize(pencil, beta0.values, cfg);
  OptimizeResult b = optimize(pencil, beta0.values, cfg);

  REQUIRE(a.trajectory.values.size() == b.trajectory.values.size());
  for (std::size_t i = 0; i < a.trajectory.values.size(); ++i) {
    CHECK(a.trajectory.values[i] == b.trajectory.values[i]);
    CHECK(a.trajectory.grad_norms[i] == b.trajectory.grad_norms[i]);
    CHECK(a.trajectory.hashes[i] == b.trajectory.hashes[i]);
  }
  REQUIRE(a.trajectory.margins.size() == b.trajectory.margins.size());
  for (std::size_t i = 0; i < a.trajectory.margins.size(); ++i) {
    CHECK(a.trajectory.margins[i].first == b.trajectory.margins[i].first);
    CHECK(a.trajectory.margins[i].second == b.trajectory.margins[i].second);
  }
  CHECK((a.beta.array() == b.beta.array()).all());
  CHECK(a.certificate.sup_s_min == b.certificate.sup_s_min);
  CHECK(a.certificate.combo_hash == b.certificate.combo_hash);
  CHECK(a.certificate.param_hash == b.certificate.param_hash);
  CHECK(trajectory_csv(a.trajectory) == trajectory_csv(b.trajectory));
}

TEST_CASE("trajectory serializes to CSV") {
  Trajectory t;
  t.values = {1.5, 1.75, 1.875};
  t.grad_norms = {0.5, 0.25, 0.125};
  t.hashes = {11, 22, 33};
  t.margins = {{0, 0.4}, {2, 0.1}};
  t.iterations = 3;
  t.stop_reason = "iteration cap";

  const std::string csv = trajectory_csv(t);
  std::istringstream is(csv);
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "iteration,value,grad_norm,margin");
  REQUIRE(std::getline(is, line));
  CHECK(line == "0,1.5,0.5,0.40000000000000002");
  REQUIRE(std::getline(is, line));
  CHECK(line == "1,1.75,0.25,");  // no snapshot, empty margin column
  REQUIRE(std::getline(is, line));
  CHECK(line == "2,1.875,0.125,0.10000000000000001");
  CHECK_FALSE(std::getline(is, line));
}

TEST_CASE("optimizer configuration is validated") {
  oracle::rng_t rng(406);
  auto data = oracle::make_affine(rng, 5, 3, {1.0, 2.0});
  ParametricPencil pencil = oracle::affine_pencil(data);
  Vec x0 = Vec::Constant(3, 0.2);

  OptimizeConfig cfg;
  cfg.combo = CombinationSpec::single(1);
  cfg.cert.random_starts = 4;
  cfg.cert.ascent_steps = 5;

  SECTION("negative step") {
    cfg.step = -0.1;
    CHECK_THROWS_WITH(optimize(pencil, x0, cfg), Catch::Matchers::ContainsSubstring("step"));
  }
  SECTION("nonpositive floor") {
    cfg.floor = 0;
    CHECK_THROWS_WITH(optimize(pencil, x0, cfg), Catch::Matchers::ContainsSubstring("floor"));
  }
  SECTION("zero iteration cap") {
    cfg.max_iters = 0;
    CHECK_THROWS_WITH(optimize(pencil, x0, cfg), Catch::Matchers::ContainsSubstring("cap"));
  }
  SECTION("margin cadence") {
    cfg.margin_every = 0;
    CHECK_THROWS_WITH(optimize(pencil, x0, cfg), Catch::Matchers::ContainsSubstring("cadence"));
  }
  SECTION("measure length mismatch") {
    cfg.normalize = true;
    cfg.l1_measure = Vec::Ones(5);
    CHECK_THROWS_WITH(optimize(pencil, x0, cfg), Catch::Matchers::ContainsSubstring("measure"));
  }
  SECTION("inadmissible start") {
    Vec far = Vec::Constant(3, 1.5);  // norm 2.6, outside the admissible ball
    CHECK_THROWS_WITH(optimize(pencil, far, cfg),
                      Catch::Matchers::ContainsSubstring("admissible"));
  }
}
