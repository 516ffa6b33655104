#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "core.hpp"

namespace eigencrit {

// Labeled chain of boundary vertices; consecutive entries are boundary edges.
// A closed loop repeats its first vertex at the end.
struct BoundaryArc {
  std::string name;
  std::vector<int> chain;

  int edge_count() const { return chain.empty() ? 0 : int(chain.size()) - 1; }
  bool closed() const { return chain.size() >= 3 && chain.front() == chain.back(); }
};

namespace detail {

inline std::pair<int, int> und_edge(int a, int b) {
  return {std::min(a, b), std::max(a, b)};
}

}  // namespace detail

struct SurfaceMesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<BoundaryArc> boundary_arcs;
  std::string generator;
  int level = -1;

  int vertex_count() const { return int(vertices.size()); }
  int triangle_count() const { return int(triangles.size()); }

  double triangle_area(int t) const {
    const auto& f = triangles[size_t(t)];
    Eigen::Vector3d u = vertices[size_t(f[1])] - vertices[size_t(f[0])];
    Eigen::Vector3d w = vertices[size_t(f[2])] - vertices[size_t(f[0])];
    return 0.5 * u.cross(w).norm();
  }

  double total_area() const {
    double a = 0.0;
    for (int t = 0; t < triangle_count(); ++t) a += triangle_area(t);
    return a;
  }

  // Undirected edge -> number of incident triangles.
  std::map<std::pair<int, int>, int> edge_use() const {
    std::map<std::pair<int, int>, int> use;
    for (const auto& f : triangles)
      for (int e = 0; e < 3; ++e) use[detail::und_edge(f[size_t(e)], f[size_t((e + 1) % 3)])] += 1;
    return use;
  }

  std::vector<std::pair<int, int>> boundary_edge_list() const {
    std::vector<std::pair<int, int>> out;
    for (const auto& [e, c] : edge_use())
      if (c == 1) out.push_back(e);
    return out;
  }

  bool has_boundary() const {
    for (const auto& [e, c] : edge_use())
      if (c == 1) return true;
    return false;
  }

  std::vector<int> boundary_vertices() const {
    std::set<int> s;
    for (const auto& e : boundary_edge_list()) {
      s.insert(e.first);
      s.insert(e.second);
    }
    return {s.begin(), s.end()};
  }

  const BoundaryArc* find_arc(const std::string& name) const {
    for (const auto& a : boundary_arcs)
      if (a.name == name) return &a;
    return nullptr;
  }

  std::vector<int> arc_vertex_set(const std::string& name) const {
    const BoundaryArc* a = find_arc(name);
    require(a != nullptr, errc::argument, "unknown boundary arc '" + name + "'");
    std::set<int> s(a->chain.begin(), a->chain.end());
    return {s.begin(), s.end()};
  }

  void validate() const {
    require(!vertices.empty(), errc::validation, "mesh has no vertices");
    require(!triangles.empty(), errc::validation, "mesh has no triangles");
    const int n = vertex_count();
    for (const auto& v : vertices)
      require(v.allFinite(), errc::validation, "non-finite vertex coordinate");
    for (const auto& f : triangles) {
      for (int e = 0; e < 3; ++e)
        require(f[size_t(e)] >= 0 && f[size_t(e)] < n, errc::validation,
                "triangle index out of range");
      require(f[0] != f[1] && f[1] != f[2] && f[0] != f[2], errc::validation,
              "degenerate triangle: repeated vertex");
    }

    double mean_area = total_area() / double(triangle_count());
    for (int t = 0; t < triangle_count(); ++t)
      require(triangle_area(t) > 1e-12 * mean_area, errc::validation,
              "degenerate triangle: vanishing area");

    // Manifold: each undirected edge in at most two triangles. Consistent
    // orientation: no directed edge appears twice.
    for (const auto& [e, c] : edge_use())
      require(c <= 2, errc::validation, "non-manifold edge");
    std::set<std::pair<int, int>> directed;
    for (const auto& f : triangles)
      for (int e = 0; e < 3; ++e) {
        auto d = std::make_pair(f[size_t(e)], f[size_t((e + 1) % 3)]);
        require(directed.insert(d).second, errc::validation,
                "inconsistent triangle orientation");
      }

    // Connected, with every vertex used by some triangle.
    std::vector<std::vector<int>> adj;
    adj.resize(size_t(n));
    for (const auto& f : triangles)
      for (int e = 0; e < 3; ++e) {
        adj[size_t(f[size_t(e)])].push_back(f[size_t((e + 1) % 3)]);
        adj[size_t(f[size_t(e)])].push_back(f[size_t((e + 2) % 3)]);
      }
    std::vector<char> seen(size_t(n), 0);
    std::queue<int> bfs;
    bfs.push(0);
    seen[0] = 1;
    while (!bfs.empty()) {
      int v = bfs.front();
      bfs.pop();
      for (int w : adj[size_t(v)])
        if (!seen[size_t(w)]) {
          seen[size_t(w)] = 1;
          bfs.push(w);
        }
    }
    for (int v = 0; v < n; ++v)
      require(seen[size_t(v)], errc::validation, "disconnected mesh");

    if (!boundary_arcs.empty()) {
      auto b_edges = boundary_edge_list();
      std::map<std::pair<int, int>, int> covered;
      for (const auto& e : b_edges) covered[e] = 0;
      std::set<std::string> names;
      for (const auto& arc : boundary_arcs) {
        require(!arc.name.empty(), errc::validation, "empty arc name");
        require(names.insert(arc.name).second, errc::validation,
                "duplicate arc name '" + arc.name + "'");
        require(arc.chain.size() >= 2, errc::validation,
                "arc '" + arc.name + "' has no edges");
        for (int v : arc.chain)
          require(v >= 0 && v < n, errc::validation, "arc vertex out of range");
        for (size_t i = 0; i + 1 < arc.chain.size(); ++i) {
          auto key = detail::und_edge(arc.chain[i], arc.chain[i + 1]);
          auto it = covered.find(key);
          require(it != covered.end(), errc::validation,
                  "arc '" + arc.name + "' uses a non-boundary edge");
          require(it->second == 0, errc::validation,
                  "boundary edge covered by two arcs");
          it->second = 1;
        }
      }
      for (const auto& [e, c] : covered)
        require(c == 1, errc::validation, "boundary edge not covered by any arc");
    }
  }
};

// ---------------------------------------------------------------------------
// OFF interchange format with a '#ARCS' extension block.
//
//   OFF
//   <nv> <nf> <ne>
//   <x> <y> <z>                      (nv lines)
//   3 <i> <j> <k>                    (nf lines)
//   #ARCS <L>                        (optional section)
//   #ARC <name> <count> <v0> ... <v_{count-1}>   (L lines)
//   #META <generator|-> <level>      (optional)
//
// Arc lines are '#'-prefixed so vanilla OFF readers treat them as comments.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline bool valid_arc_name(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

}  // namespace detail

inline SurfaceMesh parse_off(const std::string& text) {
  std::vector<std::string> lines;
  {
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
      std::string t = detail::trim(raw);
      if (!t.empty()) lines.push_back(t);
    }
  }
  size_t cursor = 0;
  auto next_line = [&](const char* what) -> const std::string& {
    require(cursor < lines.size(), errc::io_format,
            std::string("unexpected end of file: missing ") + what);
    return lines[cursor++];
  };

  require(next_line("header") == "OFF", errc::io_format, "malformed header");

  long nv = -1, nf = -1, ne = -1;
  {
    std::istringstream cs(next_line("counts line"));
    std::string extra;
    require(bool(cs >> nv >> nf >> ne) && !(cs >> extra) && nv > 0 && nf > 0 && ne >= 0,
            errc::io_format, "malformed counts line");
  }

  SurfaceMesh mesh;
  mesh.vertices.reserve(size_t(nv));
  for (long i = 0; i < nv; ++i) {
    std::istringstream vs(next_line("vertex line"));
    double x, y, z;
    std::string extra;
    require(bool(vs >> x >> y >> z) && !(vs >> extra), errc::io_format,
            "malformed vertex line");
    mesh.vertices.emplace_back(x, y, z);
  }
  mesh.triangles.reserve(size_t(nf));
  for (long i = 0; i < nf; ++i) {
    std::istringstream fs(next_line("face line"));
    long arity, a, b, c;
    std::string extra;
    require(bool(fs >> arity), errc::io_format, "malformed face line");
    require(arity == 3, errc::io_format, "non-triangular face");
    require(bool(fs >> a >> b >> c) && !(fs >> extra), errc::io_format,
            "malformed face line");
    mesh.triangles.push_back({int(a), int(b), int(c)});
  }

  if (cursor < lines.size() && lines[cursor].rfind("#ARCS", 0) == 0) {
    long count = -1;
    {
      std::istringstream as(lines[cursor++]);
      std::string tag, extra;
      require(bool(as >> tag >> count) && !(as >> extra) && count >= 0,
              errc::io_format, "malformed arc section");
    }
    for (long i = 0; i < count; ++i) {
      std::istringstream as(next_line("arc line"));
      std::string tag, name;
      long nchain = -1;
      require(bool(as >> tag >> name >> nchain) && tag == "#ARC" && nchain >= 2,
              errc::io_format, "malformed arc line");
      require(detail::valid_arc_name(name), errc::io_format, "malformed arc line");
      BoundaryArc arc;
      arc.name = name;
      for (long j = 0; j < nchain; ++j) {
        long v;
        require(bool(as >> v), errc::io_format, "malformed arc line");
        arc.chain.push_back(int(v));
      }
      std::string extra;
      require(!(as >> extra), errc::io_format, "malformed arc line");
      mesh.boundary_arcs.push_back(std::move(arc));
    }
  }

  if (cursor < lines.size() && lines[cursor].rfind("#META", 0) == 0) {
    std::istringstream ms(lines[cursor++]);
    std::string tag, gen, extra;
    long lvl;
    require(bool(ms >> tag >> gen >> lvl) && !(ms >> extra), errc::io_format,
            "malformed meta line");
    mesh.generator = (gen == "-") ? "" : gen;
    mesh.level = int(lvl);
  }

  require(cursor == lines.size(), errc::io_format, "unexpected trailing content");
  return mesh;
}

inline std::string serialize_off(const SurfaceMesh& mesh) {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "OFF\n";
  out << mesh.vertex_count() << ' ' << mesh.triangle_count() << " 0\n";
  for (const auto& v : mesh.vertices) out << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : mesh.triangles)
    out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
  if (!mesh.boundary_arcs.empty()) {
    out << "#ARCS " << mesh.boundary_arcs.size() << '\n';
    for (const auto& arc : mesh.boundary_arcs) {
      out << "#ARC " << arc.name << ' ' << arc.chain.size();
      for (int v : arc.chain) out << ' ' << v;
      out << '\n';
    }
  }
  out << "#META " << (mesh.generator.empty() ? "-" : mesh.generator) << ' '
      << mesh.level << '\n';
  return out.str();
}

inline SurfaceMesh load_mesh(const std::string& path, bool require_arc_labels = false) {
  std::ifstream in(path, std::ios::binary);
  require(bool(in), errc::io_format, "cannot open mesh file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  SurfaceMesh mesh = parse_off(buf.str());
  mesh.validate();
  if (require_arc_labels && mesh.boundary_arcs.empty() && mesh.has_boundary())
    fail(errc::validation, "unlabeled boundary: mesh has boundary edges but no arcs");
  return mesh;
}

inline void save_mesh(const SurfaceMesh& mesh, const std::string& path) {
  mesh.validate();
  std::ofstream out(path, std::ios::binary);
  require(bool(out), errc::io_format, "cannot write mesh file '" + path + "'");
  out << serialize_off(mesh);
  require(bool(out), errc::io_format, "failed writing mesh file '" + path + "'");
}

// ---------------------------------------------------------------------------
// Domain generators.
// ---------------------------------------------------------------------------

namespace detail {

// One 4-way midpoint split with projection onto the unit sphere. Midpoints of
// edges lying in a coordinate plane stay exactly in that plane.
inline void subdivide_projected(std::vector<Eigen::Vector3d>& verts,
                                std::vector<std::array<int, 3>>& faces) {
  std::map<std::pair<int, int>, int> mid;
  auto midpoint = [&](int a, int b) {
    auto key = und_edge(a, b);
    auto it = mid.find(key);
    if (it != mid.end()) return it->second;
    verts.push_back((verts[size_t(a)] + verts[size_t(b)]).normalized());
    int id = int(verts.size()) - 1;
    mid.emplace(key, id);
    return id;
  };
  std::vector<std::array<int, 3>> out;
  out.reserve(faces.size() * 4);
  for (const auto& f : faces) {
    int ab = midpoint(f[0], f[1]);
    int bc = midpoint(f[1], f[2]);
    int ca = midpoint(f[2], f[0]);
    out.push_back({f[0], ab, ca});
    out.push_back({ab, f[1], bc});
    out.push_back({ca, bc, f[2]});
    out.push_back({ab, bc, ca});
  }
  faces = std::move(out);
}

// Orders a set of edges into a single chain. Open chains start at the smallest
// endpoint; closed loops start at the smallest vertex and repeat it at the end.
inline std::vector<int> chain_from_edges(const std::vector<std::pair<int, int>>& edges) {
  std::map<int, std::vector<int>> adj;
  for (const auto& e : edges) {
    adj[e.first].push_back(e.second);
    adj[e.second].push_back(e.first);
  }
  for (auto& [v, nb] : adj) std::sort(nb.begin(), nb.end());
  int start = -1;
  for (const auto& [v, nb] : adj)
    if (nb.size() == 1) {
      start = v;
      break;
    }
  bool closed = (start < 0);
  if (closed) start = adj.begin()->first;

  std::set<std::pair<int, int>> unused(edges.begin(), edges.end());
  std::vector<int> chain{start};
  int cur = start;
  while (true) {
    int next = -1;
    for (int nb : adj[cur]) {
      if (unused.count(und_edge(cur, nb))) {
        next = nb;
        break;
      }
    }
    if (next < 0) break;
    unused.erase(und_edge(cur, next));
    chain.push_back(next);
    cur = next;
  }
  require(unused.empty(), errc::validation, "boundary arc edges do not form a chain");
  return chain;
}

// Labels boundary edges by the coordinate plane they lie in and builds arcs
// named "x0" / "y0" / "z0".
inline void label_plane_arcs(SurfaceMesh& mesh, const std::vector<int>& axes) {
  const char* names[3] = {"x0", "y0", "z0"};
  std::map<int, std::vector<std::pair<int, int>>> buckets;
  for (const auto& e : mesh.boundary_edge_list()) {
    int found = -1;
    for (int ax : axes) {
      if (std::abs(mesh.vertices[size_t(e.first)][ax]) <= 1e-12 &&
          std::abs(mesh.vertices[size_t(e.second)][ax]) <= 1e-12) {
        require(found < 0, errc::validation, "boundary edge lies in two planes");
        found = ax;
      }
    }
    require(found >= 0, errc::validation, "boundary edge off the coordinate planes");
    buckets[found].push_back(e);
  }
  for (int ax : axes) {
    auto it = buckets.find(ax);
    require(it != buckets.end(), errc::validation, "empty boundary arc");
    BoundaryArc arc;
    arc.name = names[ax];
    arc.chain = chain_from_edges(it->second);
    mesh.boundary_arcs.push_back(std::move(arc));
  }
}

inline SurfaceMesh icosphere(int level) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Eigen::Vector3d> verts = {
      {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0},
      {0, -1, t}, {0, 1, t}, {0, -1, -t}, {0, 1, -t},
      {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (auto& v : verts) v.normalize();
  std::vector<std::array<int, 3>> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int l = 0; l < level; ++l) subdivide_projected(verts, faces);

  // Outward orientation: positive signed volume.
  double vol = 0.0;
  for (const auto& f : faces)
    vol += verts[size_t(f[0])].cross(verts[size_t(f[1])]).dot(verts[size_t(f[2])]) / 6.0;
  if (vol < 0.0)
    for (auto& f : faces) std::swap(f[1], f[2]);

  SurfaceMesh mesh;
  mesh.vertices = std::move(verts);
  mesh.triangles = std::move(faces);
  mesh.generator = "sphere";
  mesh.level = level;
  return mesh;
}

// Octahedron-based geodesic patch: faces restricted to a coordinate region so
// the boundary stays exactly on the coordinate planes.
inline SurfaceMesh sphere_patch(const std::string& model, int level) {
  std::vector<Eigen::Vector3d> verts = {{1, 0, 0},  {-1, 0, 0}, {0, 1, 0},
                                        {0, -1, 0}, {0, 0, 1},  {0, 0, -1}};
  std::vector<std::array<int, 3>> faces;
  std::vector<int> axes;
  if (model == "half_sphere") {
    faces = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4}};
    axes = {2};
  } else if (model == "quadrant") {
    faces = {{0, 2, 4}, {2, 1, 4}};
    axes = {1, 2};
  } else {
    faces = {{0, 2, 4}};
    axes = {0, 1, 2};
  }
  for (int l = 0; l < level; ++l) subdivide_projected(verts, faces);

  // Drop vertices of the base octahedron not used by the kept faces.
  std::vector<int> remap(verts.size(), -1);
  std::vector<Eigen::Vector3d> kept;
  for (const auto& f : faces)
    for (int e = 0; e < 3; ++e)
      if (remap[size_t(f[size_t(e)])] < 0) {
        remap[size_t(f[size_t(e)])] = int(kept.size());
        kept.push_back(verts[size_t(f[size_t(e)])]);
      }
  for (auto& f : faces)
    for (int e = 0; e < 3; ++e) f[size_t(e)] = remap[size_t(f[size_t(e)])];

  SurfaceMesh mesh;
  mesh.vertices = std::move(kept);
  mesh.triangles = std::move(faces);
  mesh.generator = model;
  mesh.level = level;
  label_plane_arcs(mesh, axes);
  return mesh;
}

inline SurfaceMesh hex_disk(int level, int arc_count) {
  const int R = 1 << level;
  require(arc_count >= 1 && arc_count <= 6 * R, errc::argument,
          "invalid disk arc count");
  SurfaceMesh mesh;
  mesh.vertices.emplace_back(0, 0, 0);
  auto base = [](int r) { return 1 + 3 * r * (r - 1); };
  for (int r = 1; r <= R; ++r) {
    double rad = double(r) / double(R);
    for (int j = 0; j < 6 * r; ++j) {
      double a = 2.0 * M_PI * double(j) / double(6 * r);
      mesh.vertices.emplace_back(rad * std::cos(a), rad * std::sin(a), 0.0);
    }
  }
  auto idx = [&](int r, int j) {
    if (r == 0) return 0;
    int m = 6 * r;
    return base(r) + ((j % m) + m) % m;
  };
  for (int r = 0; r < R; ++r) {
    for (int s = 0; s < 6; ++s) {
      for (int k = 0; k <= r; ++k) {
        mesh.triangles.push_back({idx(r + 1, s * (r + 1) + k),
                                  idx(r + 1, s * (r + 1) + k + 1),
                                  idx(r, s * r + k)});
        if (k < r)
          mesh.triangles.push_back({idx(r + 1, s * (r + 1) + k + 1),
                                    idx(r, s * r + k + 1), idx(r, s * r + k)});
      }
    }
  }
  const int nb = 6 * R;
  for (int a = 0; a < arc_count; ++a) {
    int lo = a * nb / arc_count;
    int hi = (a + 1) * nb / arc_count;
    BoundaryArc arc;
    arc.name = "a" + std::to_string(a);
    for (int j = lo; j <= hi; ++j) arc.chain.push_back(idx(R, j));
    mesh.boundary_arcs.push_back(std::move(arc));
  }
  mesh.generator = "flat_disk";
  mesh.level = level;
  return mesh;
}

}  // namespace detail

inline SurfaceMesh generate_domain(const std::string& model, int level,
                                   int disk_arcs = 1) {
  require(level >= 0 && level <= 7, errc::argument, "invalid level");
  SurfaceMesh mesh;
  if (model == "sphere") {
    mesh = detail::icosphere(level);
  } else if (model == "half_sphere" || model == "quadrant" || model == "octant") {
    mesh = detail::sphere_patch(model, level);
  } else if (model == "flat_disk") {
    mesh = detail::hex_disk(level, disk_arcs);
  } else {
    fail(errc::argument, "unknown domain model '" + model + "'");
  }
  mesh.validate();
  return mesh;
}

// ---------------------------------------------------------------------------
// Analytic reference spectra.
// ---------------------------------------------------------------------------

struct ReferenceBC {
  enum class Problem { laplace, steklov };
  Problem problem = Problem::laplace;
  std::set<std::string> dirichlet_arcs;

  static ReferenceBC laplace(std::set<std::string> arcs = {}) {
    ReferenceBC bc;
    bc.problem = Problem::laplace;
    bc.dirichlet_arcs = std::move(arcs);
    return bc;
  }
  static ReferenceBC steklov() {
    ReferenceBC bc;
    bc.problem = Problem::steklov;
    return bc;
  }
};

// First k_max analytic eigenvalues, zero modes included. Sphere patches count
// spherical harmonics by their parity across the bounding coordinate planes:
// a Neumann plane keeps even extensions, a Dirichlet plane odd ones.
inline Vec reference_spectrum(const std::string& model, const ReferenceBC& bc,
                              int k_max) {
  require(k_max >= 1, errc::argument, "k_max must be positive");

  if (model == "flat_disk") {
    require(bc.problem == ReferenceBC::Problem::steklov, errc::argument,
            "no closed form for the flat_disk Laplace spectrum");
    Vec out(k_max);
    for (int k = 0; k < k_max; ++k) out[k] = double((k + 1) / 2);
    return out;
  }

  require(bc.problem == ReferenceBC::Problem::laplace, errc::argument,
          "no closed form for Steklov values on '" + model + "'");

  std::map<std::string, int> plane_axis;
  if (model == "sphere") {
    // no bounding planes
  } else if (model == "half_sphere") {
    plane_axis = {{"z0", 2}};
  } else if (model == "quadrant") {
    plane_axis = {{"y0", 1}, {"z0", 2}};
  } else if (model == "octant") {
    plane_axis = {{"x0", 0}, {"y0", 1}, {"z0", 2}};
  } else {
    fail(errc::argument, "unknown domain model '" + model + "'");
  }
  for (const auto& name : bc.dirichlet_arcs)
    require(plane_axis.count(name), errc::argument,
            "model '" + model + "' has no arc '" + name + "'");

  auto even_in = [](int axis, int l, int m, bool cosine) {
    if (axis == 2) return (l + m) % 2 == 0;
    if (axis == 1) return cosine;
    return cosine ? (m % 2 == 0) : (m % 2 == 1);
  };

  std::vector<double> values;
  for (int l = 0; int(values.size()) < k_max; ++l) {
    require(l <= 64, errc::argument, "k_max too large for reference spectrum");
    int count = 0;
    for (int m = 0; m <= l; ++m) {
      for (int type = 0; type < 2; ++type) {
        bool cosine = (type == 0);
        if (!cosine && m == 0) continue;
        bool ok = true;
        for (const auto& [name, axis] : plane_axis) {
          bool want_even = !bc.dirichlet_arcs.count(name);
          if (even_in(axis, l, m, cosine) != want_even) {
            ok = false;
            break;
          }
        }
        if (ok) ++count;
      }
    }
    for (int c = 0; c < count; ++c) values.push_back(double(l * (l + 1)));
  }
  values.resize(size_t(k_max));
  return Eigen::Map<Vec>(values.data(), k_max);
}

}  // namespace eigencrit
