#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mhdfem/common.hpp"

namespace mhdfem {

/// One mesh face. `n_f` is a fixed unit normal equal to the outward normal of
/// the owner tet; on boundary faces it is outward to the domain boundary.
struct FaceRecord {
  std::array<int, 3> vertex_ids{};  // sorted ascending
  int owner_tet = -1;
  int neighbor_tet = -1;  // -1 on boundary faces
  Vec3 n_f = Vec3::Zero();
  double area = 0.0;
  double h_f = 0.0;
  bool is_boundary = false;
};

/// Tetrahedral mesh with oriented face topology. Tets are stored positively
/// oriented (signed volume > 0). Immutable once built; safe to share across
/// threads for read-only assembly.
struct TetMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 4>> tets;
  std::vector<FaceRecord> faces;
  std::vector<double> h_E;         // per-tet diameter (longest edge)
  std::vector<double> tet_volume;  // signed volume, positive after orientation fix
  std::vector<std::array<int, 4>> tet_faces;  // global face id of facet opposite vertex l

  // Bitmask per vertex: bit 2*axis + (outward normal positive ? 1 : 0) for each
  // axis-aligned boundary plane the vertex lies on. Only meaningful when
  // has_non_axis_boundary is false.
  std::vector<std::uint8_t> boundary_vertex_flags;
  bool has_non_axis_boundary = false;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_tets() const { return static_cast<int>(tets.size()); }
  int n_faces() const { return static_cast<int>(faces.size()); }
};

inline double signed_tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).cross(c - a).dot(d - a) / 6.0;
}

namespace detail {

inline double longest_edge(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  double h = 0.0;
  const Vec3 pts[4] = {a, b, c, d};
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) h = std::max(h, (pts[i] - pts[j]).norm());
  return h;
}

inline double face_diameter(const Vec3& a, const Vec3& b, const Vec3& c) {
  return std::max({(a - b).norm(), (b - c).norm(), (c - a).norm()});
}

// Facet opposite local vertex l, in the orientation-independent vertex order.
inline std::array<int, 3> facet_of(const std::array<int, 4>& tet, int l) {
  std::array<int, 3> f{};
  int m = 0;
  for (int i = 0; i < 4; ++i)
    if (i != l) f[m++] = tet[i];
  return f;
}

}  // namespace detail

/// Reorient negatively-oriented tets, fill per-tet volumes and diameters.
inline void finalize_tets(TetMesh& mesh) {
  mesh.h_E.resize(mesh.tets.size());
  mesh.tet_volume.resize(mesh.tets.size());
  for (std::size_t t = 0; t < mesh.tets.size(); ++t) {
    auto& tet = mesh.tets[t];
    for (int v : tet)
      if (v < 0 || v >= mesh.n_vertices())
        throw ConsistencyError("mesh: tet " + std::to_string(t) +
                               " references vertex " + std::to_string(v) +
                               " out of range");
    double vol = signed_tet_volume(mesh.vertices[tet[0]], mesh.vertices[tet[1]],
                                   mesh.vertices[tet[2]], mesh.vertices[tet[3]]);
    if (vol < 0.0) {
      std::swap(tet[2], tet[3]);
      vol = -vol;
    }
    if (!(vol > 0.0))
      throw DegenerateElementError("mesh: tet " + std::to_string(t) +
                                   " has zero volume");
    mesh.tet_volume[t] = vol;
    mesh.h_E[t] = detail::longest_edge(mesh.vertices[tet[0]], mesh.vertices[tet[1]],
                                       mesh.vertices[tet[2]], mesh.vertices[tet[3]]);
  }
}

/// Enumerate the unique faces (sorted vertex-triple key), assign owner/neighbor
/// (owner = smaller tet index), set n_f to the owner's outward normal, and mark
/// axis-aligned boundary planes on boundary vertices.
inline void build_faces(TetMesh& mesh) {
  if (mesh.h_E.size() != mesh.tets.size()) finalize_tets(mesh);

  struct Incidence {
    int tet;
    int local;  // facet opposite local vertex `local`
  };
  std::map<std::array<int, 3>, std::vector<Incidence>> incident;
  for (int t = 0; t < mesh.n_tets(); ++t) {
    for (int l = 0; l < 4; ++l) {
      std::array<int, 3> key = detail::facet_of(mesh.tets[t], l);
      std::sort(key.begin(), key.end());
      incident[key].push_back({t, l});
    }
  }

  mesh.faces.clear();
  mesh.faces.reserve(incident.size());
  mesh.tet_faces.assign(mesh.tets.size(), {-1, -1, -1, -1});
  mesh.boundary_vertex_flags.assign(mesh.vertices.size(), 0);
  mesh.has_non_axis_boundary = false;

  for (const auto& [key, inc] : incident) {
    if (inc.size() > 2)
      throw ConsistencyError("mesh: non-conforming mesh, face shared by " +
                             std::to_string(inc.size()) + " tets");
    FaceRecord face;
    face.vertex_ids = key;
    face.owner_tet = inc[0].tet;
    face.neighbor_tet = inc.size() == 2 ? inc[1].tet : -1;
    face.is_boundary = inc.size() == 1;

    const Vec3& a = mesh.vertices[key[0]];
    const Vec3& b = mesh.vertices[key[1]];
    const Vec3& c = mesh.vertices[key[2]];
    const Vec3 cr = (b - a).cross(c - a);
    face.area = 0.5 * cr.norm();
    if (!(face.area > 0.0))
      throw DegenerateElementError("mesh: degenerate face");
    face.h_f = detail::face_diameter(a, b, c);

    // outward of the owner: away from the opposite vertex
    const Vec3& opp = mesh.vertices[mesh.tets[face.owner_tet][inc[0].local]];
    Vec3 n = cr.normalized();
    const Vec3 centroid = (a + b + c) / 3.0;
    if (n.dot(centroid - opp) < 0.0) n = -n;
    face.n_f = n;

    const int fid = static_cast<int>(mesh.faces.size());
    for (const auto& i : inc) mesh.tet_faces[i.tet][i.local] = fid;

    if (face.is_boundary) {
      int axis = -1;
      for (int a_ = 0; a_ < 3; ++a_)
        if (std::abs(std::abs(n(a_)) - 1.0) < 1e-12) axis = a_;
      if (axis < 0) {
        mesh.has_non_axis_boundary = true;
      } else {
        const std::uint8_t bit =
            static_cast<std::uint8_t>(1u << (2 * axis + (n(axis) > 0.0 ? 1 : 0)));
        for (int v : key) mesh.boundary_vertex_flags[v] |= bit;
      }
    }
    mesh.faces.push_back(face);
  }
}

/// Conforming Kuhn split of (0,1)^3 into 6*n^3 tets.
inline TetMesh generate_structured_cube(int n) {
  if (n < 1) throw ConfigError("generate_structured_cube: n must be >= 1");
  TetMesh mesh;
  const int m = n + 1;
  mesh.vertices.reserve(static_cast<std::size_t>(m) * m * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k)
        mesh.vertices.emplace_back(double(i) / n, double(j) / n, double(k) / n);
  auto vid = [m](int i, int j, int k) { return (i * m + j) * m + k; };

  // each cell is split along its main diagonal: one tet per axis permutation
  static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                      {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  mesh.tets.reserve(static_cast<std::size_t>(6) * n * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        for (const auto& p : perms) {
          std::array<int, 3> corner = {i, j, k};
          std::array<int, 4> tet{};
          tet[0] = vid(corner[0], corner[1], corner[2]);
          for (int step = 0; step < 3; ++step) {
            corner[p[step]] += 1;
            tet[step + 1] = vid(corner[0], corner[1], corner[2]);
          }
          mesh.tets.push_back(tet);
        }
  finalize_tets(mesh);
  build_faces(mesh);
  return mesh;
}

namespace detail {

inline std::vector<std::string> nonempty_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto pos = line.find('#');
    if (pos != std::string::npos) line.erase(pos);
    std::istringstream probe(line);
    std::string tok;
    if (probe >> tok) lines.push_back(line);
  }
  return lines;
}

inline std::vector<double> parse_numbers(const std::string& line, int line_no,
                                         const char* what) {
  std::istringstream in(line);
  std::vector<double> vals;
  double v;
  while (in >> v) vals.push_back(v);
  if (!in.eof()) {
    std::string tok;
    in.clear();
    in >> tok;
    throw ParseError(std::string(what) + ": unparsable token '" + tok +
                     "' on line " + std::to_string(line_no));
  }
  return vals;
}

}  // namespace detail

/// Parse tetgen ASCII .node/.ele text. Both 0-based and 1-based files are
/// accepted; the base is detected from the first node index.
inline TetMesh load_tetgen(const std::string& node_text, const std::string& ele_text) {
  TetMesh mesh;

  const auto node_lines = detail::nonempty_lines(node_text);
  if (node_lines.empty()) throw ParseError(".node: missing header on line 1");
  auto header = detail::parse_numbers(node_lines[0], 1, ".node");
  if (header.size() < 2 || header.size() > 4)
    throw ParseError(".node: malformed header on line 1");
  const int n_nodes = static_cast<int>(header[0]);
  const int dim = static_cast<int>(header[1]);
  if (dim != 3)
    throw UnsupportedError(".node: dimension " + std::to_string(dim) +
                           " not supported (need 3)");
  if (n_nodes < 1 || static_cast<int>(node_lines.size()) < n_nodes + 1)
    throw ParseError(".node: header announces " + std::to_string(n_nodes) +
                     " nodes but file has " + std::to_string(node_lines.size() - 1));

  int base = 0;
  mesh.vertices.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    auto vals = detail::parse_numbers(node_lines[i + 1], i + 2, ".node");
    if (vals.size() < 4)
      throw ParseError(".node: too few columns on line " + std::to_string(i + 2));
    const int idx = static_cast<int>(vals[0]);
    if (i == 0) base = idx;  // 0- vs 1-based autodetect
    const int slot = idx - base;
    if (slot < 0 || slot >= n_nodes)
      throw ParseError(".node: node index " + std::to_string(idx) +
                       " out of range on line " + std::to_string(i + 2));
    mesh.vertices[slot] = Vec3(vals[1], vals[2], vals[3]);
  }

  const auto ele_lines = detail::nonempty_lines(ele_text);
  if (ele_lines.empty()) throw ParseError(".ele: missing header on line 1");
  auto ehdr = detail::parse_numbers(ele_lines[0], 1, ".ele");
  if (ehdr.size() < 2 || ehdr.size() > 3)
    throw ParseError(".ele: malformed header on line 1");
  const int n_tets = static_cast<int>(ehdr[0]);
  const int npt = static_cast<int>(ehdr[1]);
  if (npt != 4)
    throw UnsupportedError(".ele: " + std::to_string(npt) +
                           " nodes per tet not supported (need 4)");
  if (n_tets < 1 || static_cast<int>(ele_lines.size()) < n_tets + 1)
    throw ParseError(".ele: header announces " + std::to_string(n_tets) +
                     " tets but file has " + std::to_string(ele_lines.size() - 1));

  mesh.tets.resize(n_tets);
  for (int t = 0; t < n_tets; ++t) {
    auto vals = detail::parse_numbers(ele_lines[t + 1], t + 2, ".ele");
    if (vals.size() < 5)
      throw ParseError(".ele: too few columns on line " + std::to_string(t + 2));
    for (int l = 0; l < 4; ++l) {
      const int v = static_cast<int>(vals[1 + l]) - base;
      if (v < 0 || v >= n_nodes)
        throw ConsistencyError(".ele: dangling vertex index " +
                               std::to_string(static_cast<int>(vals[1 + l])) +
                               " on line " + std::to_string(t + 2));
      mesh.tets[t][l] = v;
    }
  }
  finalize_tets(mesh);
  build_faces(mesh);
  return mesh;
}

/// Emit tetgen-format .node/.ele text (0-based, marker columns omitted).
inline std::pair<std::string, std::string> write_tetgen(const TetMesh& mesh) {
  std::ostringstream node, ele;
  node.precision(17);
  node << mesh.n_vertices() << " 3 0 0\n";
  for (int i = 0; i < mesh.n_vertices(); ++i)
    node << i << " " << mesh.vertices[i].x() << " " << mesh.vertices[i].y() << " "
         << mesh.vertices[i].z() << "\n";
  ele << mesh.n_tets() << " 4 0\n";
  for (int t = 0; t < mesh.n_tets(); ++t)
    ele << t << " " << mesh.tets[t][0] << " " << mesh.tets[t][1] << " "
        << mesh.tets[t][2] << " " << mesh.tets[t][3] << "\n";
  return {node.str(), ele.str()};
}

/// Internal one-entity-per-line dump, for round-trip tests.
inline std::string write_mesh_dump(const TetMesh& mesh) {
  std::ostringstream out;
  out.precision(17);
  out << "vertices " << mesh.n_vertices() << "\n";
  for (const auto& v : mesh.vertices)
    out << v.x() << " " << v.y() << " " << v.z() << "\n";
  out << "tets " << mesh.n_tets() << "\n";
  for (const auto& t : mesh.tets)
    out << t[0] << " " << t[1] << " " << t[2] << " " << t[3] << "\n";
  return out.str();
}

inline TetMesh read_mesh_dump(const std::string& text) {
  std::istringstream in(text);
  std::string kw;
  int n = 0;
  TetMesh mesh;
  if (!(in >> kw >> n) || kw != "vertices")
    throw ParseError("mesh dump: expected 'vertices <count>' on line 1");
  mesh.vertices.resize(n);
  for (auto& v : mesh.vertices)
    if (!(in >> v.x() >> v.y() >> v.z())) throw ParseError("mesh dump: bad vertex line");
  if (!(in >> kw >> n) || kw != "tets")
    throw ParseError("mesh dump: expected 'tets <count>'");
  mesh.tets.resize(n);
  for (auto& t : mesh.tets)
    if (!(in >> t[0] >> t[1] >> t[2] >> t[3])) throw ParseError("mesh dump: bad tet line");
  finalize_tets(mesh);
  build_faces(mesh);
  return mesh;
}

struct MeshMetrics {
  double h_max = 0.0;
  double h_min = 0.0;
  double h_mean = 0.0;
  double shape_regularity = 0.0;  // max over tets of h_E / inradius
};

inline MeshMetrics mesh_metrics(const TetMesh& mesh) {
  if (mesh.faces.empty() && mesh.n_tets() > 0)
    throw ConsistencyError("mesh_metrics: faces not built");
  MeshMetrics m;
  m.h_min = std::numeric_limits<double>::max();
  double sum = 0.0;
  for (int t = 0; t < mesh.n_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    const Vec3& a = mesh.vertices[tet[0]];
    const Vec3& b = mesh.vertices[tet[1]];
    const Vec3& c = mesh.vertices[tet[2]];
    const Vec3& d = mesh.vertices[tet[3]];
    double surface = 0.0;
    surface += 0.5 * (c - b).cross(d - b).norm();
    surface += 0.5 * (c - a).cross(d - a).norm();
    surface += 0.5 * (b - a).cross(d - a).norm();
    surface += 0.5 * (b - a).cross(c - a).norm();
    const double rho = 3.0 * mesh.tet_volume[t] / surface;
    if (rho < 1e-14 * mesh.h_E[t])
      throw DegenerateElementError("mesh_metrics: degenerate tet " + std::to_string(t));
    m.h_max = std::max(m.h_max, mesh.h_E[t]);
    m.h_min = std::min(m.h_min, mesh.h_E[t]);
    m.shape_regularity = std::max(m.shape_regularity, mesh.h_E[t] / rho);
    sum += mesh.h_E[t];
  }
  m.h_mean = mesh.n_tets() > 0 ? sum / mesh.n_tets() : 0.0;
  return m;
}

inline double total_volume(const TetMesh& mesh) {
  double v = 0.0;
  for (double t : mesh.tet_volume) v += t;
  return v;
}

}  // namespace mhdfem
