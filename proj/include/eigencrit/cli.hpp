#pragma once

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "euler_lagrange.hpp"
#include "expression.hpp"
#include "optimizer.hpp"
#include "report.hpp"

namespace eigencrit {
namespace detail {
inline std::uint64_t fnv1a_of(const std::string& s) { return fnv1a(s.data(), s.size()); }
}  // namespace detail
}  // namespace eigencrit

namespace eigencrit {

inline constexpr const char* kReportSchemaVersion = "1.0";

// Resolved command-line / config-file state for one invocation.
struct RunConfig {
  std::string command;
  std::string config_file;
  std::string output;  // report path; empty prints to stdout

  // Mesh source: exactly one of a generator model or an OFF file.
  std::string mesh_path;
  std::string model;
  int level = 3;
  int disk_arcs = 1;

  // Density source: constant 1 unless a file or an expression is given.
  std::string density_file;
  std::string density_expr;

  std::string op = "laplace";  // laplace | steklov
  std::string dirichlet_arcs;  // comma-separated arc names, or "all"
  std::string combo = "single:1";
  int kmax = 8;
  double cluster_tol = 1e-6;

  std::string direction = "random";  // "random" or an expression

  int cert_starts = 64;
  int cert_steps = 50;
  double cert_tol = -1;
  bool mean_zero = false;

  std::string sense = "ascend";
  std::string schedule = "constant";
  double step = 0.1;
  int iters = 100;
  double floor = 1e-6;
  bool normalize = false;
  int margin_every = 10;
  double margin_tol = -1;
  std::string trajectory;  // CSV path; empty skips the file

  std::string el_mode = "auto";
  double el_tol = -1;
  bool hersch_candidate = false;
  int search_mixtures = 0;

  int dim = 4;
  std::string frames = "random:2";
  std::string weights = "random";

  std::uint64_t seed = 2026;
  int threads = 0;
};

namespace detail {

inline void add_common(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--config", cfg.config_file, "JSON config file; flags override its values");
  sub->add_option("--output", cfg.output, "report path (stdout when omitted)");
  sub->add_option("--seed", cfg.seed, "seed for all randomized steps");
  sub->add_option("--threads", cfg.threads, "cap for parallel-safe inner loops");
}

inline void add_mesh(CLI::App* sub, RunConfig& cfg, bool allow_file = true) {
  if (allow_file) sub->add_option("--mesh", cfg.mesh_path, "OFF mesh file (with #ARCS labels)");
  sub->add_option("--model", cfg.model,
                  "generator model: sphere, half_sphere, quadrant, octant, flat_disk");
  sub->add_option("--level", cfg.level, "refinement level of the generator");
  sub->add_option("--disk-arcs", cfg.disk_arcs, "boundary arc count for flat_disk");
}

inline void add_density(CLI::App* sub, RunConfig& cfg) {
  auto* f = sub->add_option("--density-file", cfg.density_file,
                            "whitespace-separated density values, one per DOF vertex");
  auto* e = sub->add_option("--density-expr", cfg.density_expr,
                            "density expression over x, y, z, r");
  f->excludes(e);
}

inline void add_problem(CLI::App* sub, RunConfig& cfg) {
  add_mesh(sub, cfg);
  add_density(sub, cfg);
  sub->add_option("--operator", cfg.op, "laplace | steklov");
  sub->add_option("--dirichlet-arcs", cfg.dirichlet_arcs,
                  "comma-separated Dirichlet arc names, or 'all'");
  sub->add_option("--cluster-tol", cfg.cluster_tol, "relative eigenvalue clustering tolerance");
}

inline void add_combo(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--combo", cfg.combo,
                  "single:k | sum:N | inverse_sum:N | weighted:w1,w2,...");
}

inline void add_cert(CLI::App* sub, RunConfig& cfg) {
  sub->add_option("--cert-starts", cfg.cert_starts, "random restarts of the margin ascent");
  sub->add_option("--cert-steps", cfg.cert_steps, "ascent steps per restart");
  sub->add_option("--cert-tol", cfg.cert_tol, "criticality tolerance (<0 auto)");
  sub->add_flag("--mean-zero", cfg.mean_zero, "restrict probe directions to mean zero");
}

inline void build_cli(CLI::App& app, RunConfig& cfg) {
  app.require_subcommand(1);

  auto* spectrum = app.add_subcommand("spectrum", "eigenvalues, clusters, normalized values");
  add_problem(spectrum, cfg);
  spectrum->add_option("--kmax", cfg.kmax, "number of eigenvalues, kernel modes included");
  add_common(spectrum, cfg);

  auto* derivative =
      app.add_subcommand("derivative", "one-sided directional derivatives of a combination");
  add_problem(derivative, cfg);
  add_combo(derivative, cfg);
  derivative->add_option("--direction", cfg.direction,
                         "'random' or an expression over x, y, z, r");
  add_common(derivative, cfg);

  auto* criticality =
      app.add_subcommand("criticality", "search for a strict-ascent witness direction");
  add_problem(criticality, cfg);
  add_combo(criticality, cfg);
  add_cert(criticality, cfg);
  add_common(criticality, cfg);

  auto* hersch = app.add_subcommand("hersch", "inverse-eigenvalue sum for a generated model");
  add_mesh(hersch, cfg, /*allow_file=*/false);
  add_density(hersch, cfg);
  add_common(hersch, cfg);

  auto* optimize = app.add_subcommand("optimize", "projected subgradient iteration");
  add_problem(optimize, cfg);
  add_combo(optimize, cfg);
  optimize->add_option("--sense", cfg.sense, "ascend | descend");
  optimize->add_option("--schedule", cfg.schedule, "constant | inverse_iter");
  optimize->add_option("--step", cfg.step, "step size (0 allowed: log-only run)");
  optimize->add_option("--iters", cfg.iters, "iteration cap");
  optimize->add_option("--floor", cfg.floor, "positivity floor kept by the projection");
  optimize->add_flag("--normalize", cfg.normalize, "fix the measure-weighted L1 norm");
  optimize->add_option("--margin-every", cfg.margin_every, "criticality snapshot cadence");
  optimize->add_option("--margin-tol", cfg.margin_tol, "stop margin (<0 auto)");
  optimize->add_option("--trajectory", cfg.trajectory, "CSV trajectory output path");
  add_cert(optimize, cfg);
  add_common(optimize, cfg);

  auto* verify_el = app.add_subcommand("verify-el", "Euler-Lagrange residuals of a candidate");
  add_problem(verify_el, cfg);
  add_combo(verify_el, cfg);
  verify_el->add_option("--el-mode", cfg.el_mode,
                        "auto | conformal_class | steklov | mixed_bc | trace_identity");
  verify_el->add_option("--el-tol", cfg.el_tol, "relative residual tolerance (<0 default)");
  verify_el->add_flag("--hersch", cfg.hersch_candidate,
                      "verify the model's Hersch candidate instead of --combo");
  verify_el->add_option("--search-mixtures", cfg.search_mixtures,
                        "random in-cluster mixtures to try (0 = none)");
  add_common(verify_el, cfg);

  auto* mix = app.add_subcommand("mix", "collapse a frame mixture and check majorization");
  mix->add_option("--dim", cfg.dim, "cluster dimension");
  mix->add_option("--frames", cfg.frames, "random:N frames");
  mix->add_option("--weights", cfg.weights, "'random' or w1,w2,...");
  add_common(mix, cfg);
}

// Option long-names of a parsed subcommand, split into seen / available.
inline void collect_option_names(const CLI::App& sub, std::set<std::string>& seen,
                                 std::set<std::string>& known) {
  for (const CLI::Option* o : sub.get_options()) {
    for (const std::string& name : o->get_lnames()) {
      known.insert(name);
      if (o->count() > 0) seen.insert(name);
    }
  }
}

}  // namespace detail

struct ParseOutcome {
  RunConfig cfg;
  int early_exit = -1;  // >= 0: print help_text and exit with this code
  std::string help_text;
};

// Parses flags, then fills unset options from the JSON config file (flags
// override file values; unknown file keys are rejected).
inline ParseOutcome parse_config(std::vector<std::string> args) {
  for (int pass = 0;; ++pass) {
    ParseOutcome out;
    RunConfig& cfg = out.cfg;
    CLI::App app{"parametric eigenvalue pencils on discrete surfaces"};
    detail::build_cli(app, cfg);

    try {
      std::vector<std::string> rev(args.rbegin(), args.rend());
      app.parse(rev);
    } catch (const CLI::CallForHelp&) {
      auto subs = app.get_subcommands();
      out.help_text = subs.empty() ? app.help() : subs.front()->help();
      out.early_exit = 0;
      return out;
    } catch (const CLI::ParseError& e) {
      fail(errc::argument, std::string(e.get_name()) + ": " + e.what());
    }

    CLI::App* sub = app.get_subcommands().front();
    cfg.command = sub->get_name();

    if (cfg.config_file.empty() || pass == 1) {
      require(cfg.mesh_path.empty() || std::filesystem::exists(cfg.mesh_path), errc::argument,
              "mesh file '" + cfg.mesh_path + "' does not exist");
      require(cfg.density_file.empty() || std::filesystem::exists(cfg.density_file),
              errc::argument, "density file '" + cfg.density_file + "' does not exist");
      return out;
    }

    // Merge pass: splice file-provided values for options not set on the
    // command line directly after the subcommand token, then reparse.
    json file = load_json_file(cfg.config_file);
    require(file.is_object(), errc::io_format,
            "config file '" + cfg.config_file + "' must hold a JSON object");
    std::set<std::string> seen, known;
    detail::collect_option_names(*sub, seen, known);

    std::vector<std::string> extra;
    for (const auto& [key, val] : file.items()) {
      require(key != "config", errc::argument, "config file cannot set 'config'");
      require(known.count(key) > 0, errc::argument,
              "config file: unknown key '" + key + "' for command '" + cfg.command + "'");
      if (seen.count(key)) continue;  // flag overrides file value
      if (val.is_boolean()) {
        extra.push_back("--" + key + (val.get<bool>() ? "=true" : "=false"));
      } else if (val.is_string()) {
        extra.push_back("--" + key);
        extra.push_back(val.get<std::string>());
      } else if (val.is_number()) {
        extra.push_back("--" + key);
        extra.push_back(val.dump());
      } else {
        fail(errc::argument, "config file key '" + key + "': expected scalar value");
      }
    }

    auto at = std::find(args.begin(), args.end(), cfg.command);
    require(at != args.end(), errc::argument, "cannot locate command token for config merge");
    args.insert(std::next(at), extra.begin(), extra.end());
  }
}

// ---------------------------------------------------------------------------
// Input construction shared by the commands.
// ---------------------------------------------------------------------------
namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    fail(errc::argument, what + ": malformed number '" + s + "'");
  }
  require(used == s.size(), errc::argument, what + ": malformed number '" + s + "'");
  return v;
}

inline int parse_int(const std::string& s, const std::string& what) {
  const double v = parse_double(s, what);
  require(v == std::floor(v), errc::argument, what + ": expected integer, got '" + s + "'");
  return static_cast<int>(v);
}

inline SurfaceMesh cli_mesh(const RunConfig& cfg) {
  require(!cfg.mesh_path.empty() || !cfg.model.empty(), errc::argument,
          "missing required field: --mesh or --model");
  require(cfg.mesh_path.empty() || cfg.model.empty(), errc::argument,
          "--mesh and --model are mutually exclusive");
  if (!cfg.model.empty()) return generate_domain(cfg.model, cfg.level, cfg.disk_arcs);
  return load_mesh(cfg.mesh_path);
}

// Density over the parameter DOFs: all vertices for the Laplace pencil,
// boundary vertices for the Steklov pencil.
inline DensityField cli_density(const RunConfig& cfg, const SurfaceMesh& mesh,
                                const std::vector<int>& dof_vertices) {
  const int n = static_cast<int>(dof_vertices.size());
  DensityField f;
  if (!cfg.density_file.empty()) {
    std::ifstream in(cfg.density_file);
    require(in.good(), errc::io_format, "cannot open density file '" + cfg.density_file + "'");
    std::vector<double> vals;
    double v = 0;
    while (in >> v) vals.push_back(v);
    require(static_cast<int>(vals.size()) == n, errc::io_format,
            "density file '" + cfg.density_file + "': expected " + std::to_string(n) +
                " values, got " + std::to_string(vals.size()));
    f.values = Eigen::Map<Vec>(vals.data(), n);
  } else if (!cfg.density_expr.empty()) {
    Expression e = Expression::parse(cfg.density_expr);
    f.values.resize(n);
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d& p = mesh.vertices[static_cast<std::size_t>(dof_vertices[i])];
      f.values[i] = e.eval(p.x(), p.y(), p.z());
    }
  } else {
    return DensityField::constant(n);
  }
  f.validate();
  return f;
}

inline std::string density_label(const RunConfig& cfg) {
  if (!cfg.density_file.empty()) return "file:" + cfg.density_file;
  if (!cfg.density_expr.empty()) return "expr:" + cfg.density_expr;
  return "constant";
}

inline BoundaryConditionSpec cli_bc(const RunConfig& cfg, const SurfaceMesh& mesh) {
  if (cfg.dirichlet_arcs.empty()) return BoundaryConditionSpec::all_neumann();
  if (cfg.dirichlet_arcs == "all") return BoundaryConditionSpec::all_dirichlet();
  auto names = split_list(cfg.dirichlet_arcs);
  return BoundaryConditionSpec::dirichlet_on({names.begin(), names.end()}, mesh);
}

inline CombinationSpec cli_combo(const std::string& s) {
  const auto colon = s.find(':');
  const std::string kind = s.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : s.substr(colon + 1);
  if (kind == "single") return CombinationSpec::single(parse_int(arg, "--combo single"));
  if (kind == "sum") return CombinationSpec::sum(parse_int(arg, "--combo sum"));
  if (kind == "inverse_sum")
    return CombinationSpec::inverse_sum(parse_int(arg, "--combo inverse_sum"));
  if (kind == "weighted") {
    auto parts = split_list(arg);
    require(!parts.empty(), errc::argument, "--combo weighted: no weights given");
    Vec w(static_cast<int>(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i)
      w[static_cast<int>(i)] = parse_double(parts[i], "--combo weighted");
    return CombinationSpec::weighted(w);
  }
  fail(errc::argument, "unknown combination '" + s + "'");
}

struct Problem {
  SurfaceMesh mesh;
  DensityField beta;
  ParametricPencil pencil;
  ScalingSpec scaling;
  Vec l1_measure;
  BoundaryConditionSpec bc;
};

inline Problem cli_problem(const RunConfig& cfg) {
  Problem p;
  p.mesh = cli_mesh(cfg);
  if (cfg.op == "laplace") {
    std::vector<int> all(static_cast<std::size_t>(p.mesh.vertex_count()));
    for (int v = 0; v < p.mesh.vertex_count(); ++v) all[static_cast<std::size_t>(v)] = v;
    p.beta = cli_density(cfg, p.mesh, all);
    p.bc = cli_bc(cfg, p.mesh);
    p.pencil = assemble_conformal_laplace(p.mesh, p.beta, p.bc);
    p.scaling = laplace_volume_scaling(p.mesh);
    p.l1_measure = vertex_areas(p.mesh);
  } else if (cfg.op == "steklov") {
    require(cfg.dirichlet_arcs.empty(), errc::argument,
            "--dirichlet-arcs does not apply to the Steklov operator");
    p.beta = cli_density(cfg, p.mesh, steklov_dof_vertices(p.mesh));
    p.pencil = assemble_steklov(p.mesh, p.beta);
    p.scaling = steklov_perimeter_scaling(p.mesh);
    p.l1_measure = steklov_lumped_weights(p.mesh);
  } else {
    fail(errc::argument, "unknown operator '" + cfg.op + "'");
  }
  return p;
}

inline Vec cli_direction(const RunConfig& cfg, const Problem& p) {
  Vec h;
  if (cfg.direction == "random") {
    rng_t rng(cfg.seed);
    h = random_gaussian(rng, p.pencil.param_dim);
  } else {
    Expression e = Expression::parse(cfg.direction);
    const std::vector<int> dofs = cfg.op == "steklov"
                                      ? steklov_dof_vertices(p.mesh)
                                      : [&] {
                                          std::vector<int> all(
                                              static_cast<std::size_t>(p.mesh.vertex_count()));
                                          for (int v = 0; v < p.mesh.vertex_count(); ++v)
                                            all[static_cast<std::size_t>(v)] = v;
                                          return all;
                                        }();
    h.resize(static_cast<int>(dofs.size()));
    for (std::size_t i = 0; i < dofs.size(); ++i) {
      const Eigen::Vector3d& q = p.mesh.vertices[static_cast<std::size_t>(dofs[i])];
      h[static_cast<int>(i)] = e.eval(q.x(), q.y(), q.z());
    }
  }
  const double norm = h.norm();
  require(norm > 0, errc::validation, "probe direction is zero");
  return h / norm;
}

inline json cluster_json(const ClusteredSpectrum& spec, double sc) {
  json arr = json::array();
  for (const Cluster& c : spec.clusters) {
    json jc;
    jc["mu"] = c.mu;
    jc["mu_normalized"] = c.mu * sc;
    jc["first"] = c.j;
    jc["last"] = c.J;
    jc["multiplicity"] = c.m();
    arr.push_back(jc);
  }
  return arr;
}

inline json certificate_json(const CriticalityReport& rep) {
  json jc;
  jc["verdict"] = rep.verdict == CriticalityReport::Verdict::noncritical_with_witness
                      ? "noncritical_with_witness"
                      : "no_witness_found";
  jc["sup_s_min"] = rep.sup_s_min;
  jc["inf_s_max"] = rep.inf_s_max;
  jc["tol"] = rep.tol;
  jc["random_starts"] = rep.random_starts;
  jc["ascent_steps"] = rep.ascent_steps;
  jc["combo_hash"] = hash_hex(rep.combo_hash);
  jc["param_hash"] = hash_hex(rep.param_hash);
  if (rep.witness) {
    jc["witness_hash"] = hash_hex(hash_bytes(*rep.witness));
    jc["witness"] = vec_to_json(*rep.witness);
  }
  return jc;
}

inline CertBudget cli_budget(const RunConfig& cfg) {
  CertBudget b;
  b.random_starts = cfg.cert_starts;
  b.ascent_steps = cfg.cert_steps;
  b.tol = cfg.cert_tol;
  b.mean_zero = cfg.mean_zero;
  b.cluster_tol = cfg.cluster_tol;
  b.seed = cfg.seed;
  return b;
}

inline json residual_json(const ResidualReport& rep) {
  json jr;
  jr["mode"] = rep.mode;
  json entries = json::array();
  for (const ResidualEntry& e : rep.entries) {
    json je;
    je["name"] = e.name;
    je["sup"] = e.sup;
    je["l2"] = e.l2;
    je["scale"] = e.scale;
    je["rel"] = e.rel();
    entries.push_back(je);
  }
  jr["entries"] = entries;
  jr["tolerance"] = rep.tolerance;
  jr["worst_rel"] = rep.worst_rel;
  jr["pass"] = rep.pass;
  return jr;
}

inline json quadric_json(const QuadricMap& map) {
  json jm;
  jm["columns"] = map.columns();
  jm["c"] = map.c;
  jm["S"] = map.S;
  jm["scale"] = map.sc;
  json eps = json::array();
  for (int i = 0; i < map.eps.size(); ++i) eps.push_back(map.eps[i]);
  jm["eps"] = eps;
  jm["d_tilde"] = vec_to_json(map.d_tilde);
  jm["cluster_values"] = vec_to_json(map.lambda);
  if (!map.note.empty()) jm["note"] = map.note;
  return jm;
}

inline ElMode cli_el_mode(const RunConfig& cfg, const SurfaceMesh& mesh, bool hersch) {
  if (cfg.el_mode != "auto") return parse_el_mode(cfg.el_mode);
  if (hersch) return mesh.has_boundary() ? ElMode::mixed_bc : ElMode::conformal_class;
  if (cfg.op == "steklov") return ElMode::steklov;
  return ElMode::conformal_class;
}

// ---------------------------------------------------------------------------
// Command bodies. Each fills report["results"]; the surrounding runner has
// already echoed the config and input hashes.
// ---------------------------------------------------------------------------

inline json run_spectrum(const RunConfig& cfg, json& report) {
  Problem p = cli_problem(cfg);
  report["input_hashes"]["mesh"] = hash_hex(detail::fnv1a_of(serialize_off(p.mesh)));
  report["input_hashes"]["density"] = hash_hex(hash_bytes(p.beta.values));
  require(cfg.kmax >= 1, errc::argument, "--kmax must be >= 1");
  const int k = std::min(cfg.kmax, p.pencil.dim);
  ClusteredSpectrum spec = solve_spectrum(p.pencil, p.beta.values, k, cfg.cluster_tol);
  const double sc = p.scaling.value_at(p.beta.values);

  json res;
  res["dim"] = p.pencil.dim;
  res["zero_modes"] = spec.zero_modes;
  res["scale"] = sc;
  res["eigenvalues"] = vec_to_json(spec.raw_values);
  Vec normalized(spec.K());
  for (int i = 1; i <= spec.K(); ++i) normalized[i - 1] = sc * spec.lambda(i);
  res["normalized"] = vec_to_json(normalized);
  res["clusters"] = cluster_json(spec, sc);
  res["last_cluster_truncated"] = spec.last_cluster_truncated;
  return res;
}

inline json run_derivative(const RunConfig& cfg, json& report) {
  Problem p = cli_problem(cfg);
  report["input_hashes"]["mesh"] = hash_hex(detail::fnv1a_of(serialize_off(p.mesh)));
  report["input_hashes"]["density"] = hash_hex(hash_bytes(p.beta.values));
  CombinationSpec combo = cli_combo(cfg.combo);
  const int k = std::min(p.pencil.dim, combo.N + p.pencil.expected_kernel_dim + 4);
  ClusteredSpectrum spec = solve_spectrum(p.pencil, p.beta.values, k, cfg.cluster_tol);
  Vec h = cli_direction(cfg, p);
  report["input_hashes"]["direction"] = hash_hex(hash_bytes(h));

  json res;
  res["combo"] = combo.name;
  json entries = json::array();
  for (int idx = 1; idx <= combo.N; ++idx) {
    auto [lb, right] =
        normalized_value_and_derivative(p.pencil, spec, p.scaling, p.beta.values, h, idx);
    auto [lb2, right_back] =
        normalized_value_and_derivative(p.pencil, spec, p.scaling, p.beta.values, -h, idx);
    json je;
    je["k"] = idx;
    je["lambda"] = spec.lambda(idx);
    je["lambda_bar"] = lb;
    je["right_derivative"] = right;
    je["left_derivative"] = -right_back;
    entries.push_back(je);
  }
  res["entries"] = entries;

  ComboState st = combination_state(spec, combo, p.scaling, p.beta.values);
  json jc;
  jc["value"] = combo.evaluate(st.lambda_bar);
  jc["right_derivative"] =
      combination_right_derivative(p.pencil, spec, combo, p.scaling, p.beta.values, h);
  jc["left_derivative"] =
      -combination_right_derivative(p.pencil, spec, combo, p.scaling, p.beta.values, -h);
  res["combination"] = jc;
  return res;
}

inline json run_criticality(const RunConfig& cfg, json& report) {
  Problem p = cli_problem(cfg);
  report["input_hashes"]["mesh"] = hash_hex(detail::fnv1a_of(serialize_off(p.mesh)));
  report["input_hashes"]["density"] = hash_hex(hash_bytes(p.beta.values));
  CombinationSpec combo = cli_combo(cfg.combo);
  CriticalityReport rep =
      criticality_certificate(p.pencil, p.beta.values, combo, p.scaling, cli_budget(cfg));
  json res;
  res["combo"] = combo.name;
  res["certificate"] = certificate_json(rep);
  return res;
}

inline json run_hersch(const RunConfig& cfg, json& report) {
  require(!cfg.model.empty(), errc::argument, "missing required field: --model");
  SurfaceMesh mesh = generate_domain(cfg.model, cfg.level, cfg.disk_arcs);
  std::vector<int> all(static_cast<std::size_t>(mesh.vertex_count()));
  for (int v = 0; v < mesh.vertex_count(); ++v) all[static_cast<std::size_t>(v)] = v;
  DensityField beta = cli_density(cfg, mesh, all);
  report["input_hashes"]["mesh"] = hash_hex(detail::fnv1a_of(serialize_off(mesh)));
  report["input_hashes"]["density"] = hash_hex(hash_bytes(beta.values));

  HerschReport hr = hersch_sum(mesh, beta);
  json res;
  res["model"] = hr.model;
  res["value"] = hr.value;
  res["target"] = hr.target;
  res["relative_deviation"] = std::abs(hr.value - hr.target) / hr.target;
  json terms = json::array();
  for (const HerschTerm& t : hr.terms) {
    json jt;
    jt["label"] = t.label;
    jt["lambda"] = t.lambda;
    jt["lambda_bar"] = t.lambda_bar;
    terms.push_back(jt);
  }
  res["terms"] = terms;
  return res;
}

inline json run_optimize(const RunConfig& cfg, json& report) {
  Problem p = cli_problem(cfg);
  report["input_hashes"]["mesh"] = hash_hex(detail::fnv1a_of(serialize_off(p.mesh)));
  report["input_hashes"]["density"] = hash_hex(hash_bytes(p.beta.values));

  OptimizeConfig oc;
  oc.combo = cli_combo(cfg.combo);
  oc.scaling = p.scaling;
  if (cfg.sense == "ascend") oc.sense = OptimizeConfig::Sense::ascend;
  else if (cfg.sense == "descend") oc.sense = OptimizeConfig::Sense::descend;
  else fail(errc::argument, "unknown sense '" + cfg.sense + "'");
  if (cfg.schedule == "constant") oc.schedule = OptimizeConfig::Schedule::constant;
  else if (cfg.schedule == "inverse_iter") oc.schedule = OptimizeConfig::Schedule::inverse_iter;
  else fail(errc::argument, "unknown schedule '" + cfg.schedule + "'");
  oc.step = cfg.step;
  oc.max_iters = cfg.iters;
  oc.floor = cfg.floor;
  oc.normalize = cfg.normalize;
  if (cfg.normalize) oc.l1_measure = p.l1_measure;
  oc.cluster_tol = cfg.cluster_tol;
  oc.margin_tol = cfg.margin_tol;
  oc.margin_every = cfg.margin_every;
  oc.seed = cfg.seed;
  oc.cert = cli_budget(cfg);

  OptimizeResult res = optimize(p.pencil, p.beta.values, oc);

  if (!cfg.trajectory.empty()) {
    std::ofstream out(cfg.trajectory);
    require(out.good(), errc::io_format,
            "cannot open trajectory file '" + cfg.trajectory + "'");
    out << trajectory_csv(res.trajectory);
  }

  json jr;
  jr["combo"] = oc.combo.name;
  jr["iterations"] = res.trajectory.iterations;
  jr["stop_reason"] = res.trajectory.stop_reason;
  jr["value_initial"] = res.trajectory.values.front();
  jr["value_final"] = res.trajectory.values.back();
  json margins = json::array();
  for (const auto& [it, m] : res.trajectory.margins) margins.push_back(json::array({it, m}));
  jr["margins"] = margins;
  jr["beta_hash"] = hash_hex(hash_bytes(res.beta));
  jr["beta_min"] = res.beta.minCoeff();
  jr["beta_l1"] = p.l1_measure.dot(res.beta.cwiseAbs());
  jr["beta"] = vec_to_json(res.beta);
  jr["trajectory_file"] = cfg.trajectory;
  jr["certificate"] = certificate_json(res.certificate);
  return jr;
}

inline json run_verify_el(const RunConfig& cfg, json& report) {
  json res;
  if (cfg.hersch_candidate) {
    SurfaceMesh mesh = cli_mesh(cfg);
    std::vector<int> all(static_cast<std::size_t>(mesh.vertex_count()));
    for (int v = 0; v < mesh.vertex_count(); ++v) all[static_cast<std::size_t>(v)] = v;
    DensityField beta = cli_density(cfg, mesh, all);
    report["input_hashes"]["mesh"] = hash_hex(detail::fnv1a_of(serialize_off(mesh)));
    report["input_hashes"]["density"] = hash_hex(hash_bytes(beta.values));

    QuadricMap map = hersch_el_candidate(mesh, beta);
    ParametricPencil pencil =
        assemble_conformal_laplace(mesh, beta, BoundaryConditionSpec::all_neumann());
    const ElMode mode = cli_el_mode(cfg, mesh, /*hersch=*/true);
    ResidualReport rep = el_residual(map, pencil, mesh, beta.values, mode, cfg.el_tol);
    res["candidate"] = quadric_json(map);
    res["residuals"] = residual_json(rep);
    res["pass"] = rep.pass;
    return res;
  }

  Problem p = cli_problem(cfg);
  report["input_hashes"]["mesh"] = hash_hex(detail::fnv1a_of(serialize_off(p.mesh)));
  report["input_hashes"]["density"] = hash_hex(hash_bytes(p.beta.values));
  CombinationSpec combo = cli_combo(cfg.combo);
  const int k = std::min(p.pencil.dim, combo.N + p.pencil.expected_kernel_dim + 4);
  ClusteredSpectrum spec = solve_spectrum(p.pencil, p.beta.values, k, cfg.cluster_tol);
  const ElMode mode = cli_el_mode(cfg, p.mesh, /*hersch=*/false);

  QuadricMap map =
      cfg.search_mixtures > 0
          ? search_el_mixture(p.pencil, spec, combo, p.scaling, p.beta.values, p.mesh, mode,
                              cfg.search_mixtures, cfg.seed)
          : assemble_el_candidate(p.pencil, spec, combo, p.scaling, p.beta.values);
  if (p.pencil.dim != p.mesh.vertex_count())
    map.dof_vertices = cfg.op == "steklov" ? steklov_dof_vertices(p.mesh)
                                           : laplace_dof_vertices(p.mesh, p.bc);
  ResidualReport rep = el_residual(map, p.pencil, p.mesh, p.beta.values, mode, cfg.el_tol);
  res["combo"] = combo.name;
  res["candidate"] = quadric_json(map);
  res["residuals"] = residual_json(rep);
  res["pass"] = rep.pass;
  return res;
}

inline json run_mix(const RunConfig& cfg, json& /*report*/) {
  require(cfg.dim >= 1, errc::argument, "--dim must be >= 1");
  require(cfg.frames.rfind("random:", 0) == 0, errc::argument,
          "--frames must look like random:N");
  const int frame_count = parse_int(cfg.frames.substr(7), "--frames");
  require(frame_count >= 1, errc::argument, "--frames: need at least one frame");

  rng_t rng(cfg.seed);
  Vec weights;
  if (cfg.weights == "random") {
    weights = random_gaussian(rng, cfg.dim);
  } else {
    auto parts = split_list(cfg.weights);
    require(static_cast<int>(parts.size()) == cfg.dim, errc::argument,
            "--weights: expected " + std::to_string(cfg.dim) + " values");
    weights.resize(cfg.dim);
    for (std::size_t i = 0; i < parts.size(); ++i)
      weights[static_cast<int>(i)] = parse_double(parts[i], "--weights");
  }

  WeightedFrameCombo fc;
  fc.dim = cfg.dim;
  fc.weights = weights;
  std::uniform_real_distribution<double> uni(0.1, 1.0);
  Vec t(frame_count);
  for (int a = 0; a < frame_count; ++a) t[a] = uni(rng);
  t /= t.sum();
  for (int a = 0; a < frame_count; ++a)
    fc.entries.push_back({t[a], random_orthogonal(rng, cfg.dim)});

  MixResult mr = mix_frames(fc);
  MajorizationResult maj = majorization_check(mr.mixed, weights);

  json res;
  res["dim"] = cfg.dim;
  res["frame_count"] = frame_count;
  res["weights"] = vec_to_json(weights);
  res["mixed"] = vec_to_json(mr.mixed);
  json jm;
  jm["member"] = maj.member;
  jm["margin"] = maj.margin;
  jm["total_gap"] = maj.total_gap;
  res["majorization"] = jm;
  const int m = cfg.dim;
  res["frame_gram_residual"] =
      (mr.frame.transpose() * mr.frame - Mat::Identity(m, m)).cwiseAbs().maxCoeff();
  res["certificate_row_residual"] =
      (mr.certificate.rowwise().sum() - Vec::Ones(m)).cwiseAbs().maxCoeff();
  res["certificate_col_residual"] =
      (mr.certificate.colwise().sum().transpose() - Vec::Ones(m)).cwiseAbs().maxCoeff();
  res["pass"] = maj.member;
  return res;
}

inline json config_echo(const RunConfig& cfg) {
  json jc;
  jc["command"] = cfg.command;
  if (!cfg.mesh_path.empty()) jc["mesh"] = cfg.mesh_path;
  if (!cfg.model.empty()) {
    jc["model"] = cfg.model;
    jc["level"] = cfg.level;
    if (cfg.model == "flat_disk") jc["disk_arcs"] = cfg.disk_arcs;
  }
  if (cfg.command != "mix") jc["density"] = density_label(cfg);
  if (cfg.command == "spectrum" || cfg.command == "derivative" ||
      cfg.command == "criticality" || cfg.command == "optimize" ||
      cfg.command == "verify-el") {
    jc["operator"] = cfg.op;
    if (!cfg.dirichlet_arcs.empty()) jc["dirichlet_arcs"] = cfg.dirichlet_arcs;
    jc["cluster_tol"] = cfg.cluster_tol;
  }
  if (cfg.command == "spectrum") jc["kmax"] = cfg.kmax;
  if (cfg.command == "derivative" || cfg.command == "criticality" ||
      cfg.command == "optimize" || cfg.command == "verify-el")
    jc["combo"] = cfg.combo;
  if (cfg.command == "derivative") jc["direction"] = cfg.direction;
  if (cfg.command == "criticality" || cfg.command == "optimize") {
    json cert;
    cert["random_starts"] = cfg.cert_starts;
    cert["ascent_steps"] = cfg.cert_steps;
    cert["tol"] = cfg.cert_tol;
    cert["mean_zero"] = cfg.mean_zero;
    jc["certificate"] = cert;
  }
  if (cfg.command == "optimize") {
    jc["sense"] = cfg.sense;
    jc["schedule"] = cfg.schedule;
    jc["step"] = cfg.step;
    jc["iters"] = cfg.iters;
    jc["floor"] = cfg.floor;
    jc["normalize"] = cfg.normalize;
    jc["margin_every"] = cfg.margin_every;
    jc["margin_tol"] = cfg.margin_tol;
  }
  if (cfg.command == "verify-el") {
    jc["el_mode"] = cfg.el_mode;
    jc["el_tol"] = cfg.el_tol;
    jc["hersch"] = cfg.hersch_candidate;
    jc["search_mixtures"] = cfg.search_mixtures;
  }
  if (cfg.command == "mix") {
    jc["dim"] = cfg.dim;
    jc["frames"] = cfg.frames;
    jc["weights"] = cfg.weights;
  }
  jc["seed"] = cfg.seed;
  jc["threads"] = cfg.threads;
  return jc;
}

}  // namespace detail

// Dispatch with the report header already in place; fills results.
inline void run_command(const RunConfig& cfg, json& report) {
  json res;
  if (cfg.command == "spectrum") res = detail::run_spectrum(cfg, report);
  else if (cfg.command == "derivative") res = detail::run_derivative(cfg, report);
  else if (cfg.command == "criticality") res = detail::run_criticality(cfg, report);
  else if (cfg.command == "hersch") res = detail::run_hersch(cfg, report);
  else if (cfg.command == "optimize") res = detail::run_optimize(cfg, report);
  else if (cfg.command == "verify-el") res = detail::run_verify_el(cfg, report);
  else if (cfg.command == "mix") res = detail::run_mix(cfg, report);
  else fail(errc::argument, "unknown command '" + cfg.command + "'");
  report["results"] = std::move(res);
}

// Full CLI entry: parse, dispatch, emit the report. Exit code 0 on success,
// 2 on argument/validation errors, 3 on numerical failures; the report is
// written for codes 0 and 3.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& errs) {
  RunConfig cfg;
  try {
    ParseOutcome po = parse_config(args);
    if (po.early_exit >= 0) {
      out << po.help_text;
      return po.early_exit;
    }
    cfg = po.cfg;
  } catch (const error& e) {
    errs << "error: " << e.what() << '\n';
    return e.exit_code();
  }

  if (cfg.threads > 0) {
#ifdef _WIN32
    _putenv_s("EIGENCRIT_THREADS", std::to_string(cfg.threads).c_str());
#else
    setenv("EIGENCRIT_THREADS", std::to_string(cfg.threads).c_str(), 1);
#endif
  }

  json report;
  report["schema_version"] = kReportSchemaVersion;
  report["command"] = cfg.command;
  report["config"] = detail::config_echo(cfg);
  report["input_hashes"] = json::object();

  int code = 0;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    run_command(cfg, report);
    report["status"] = "ok";
  } catch (const error& e) {
    if (e.exit_code() != 3) {
      errs << "error: " << e.what() << '\n';
      return e.exit_code();
    }
    if (!report.contains("results")) report["results"] = json::object();
    report["status"] = "numerical_error";
    report["error"] = e.what();
    code = 3;
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  report["timing"] = json{{"seconds", seconds}};

  try {
    if (cfg.output.empty()) out << report.dump(2) << '\n';
    else write_report(report, cfg.output);
  } catch (const error& e) {
    errs << "error: " << e.what() << '\n';
    return e.exit_code();
  }
  return code;
}

}  // namespace eigencrit
