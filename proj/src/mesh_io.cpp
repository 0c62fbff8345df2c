#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "nrd/errors.hpp"
#include "nrd/manifold.hpp"

namespace nrd {

namespace {

std::vector<MeshGraph::Edge> face_edges(const std::vector<std::vector<int>>& polys) {
  std::vector<MeshGraph::Edge> edges;
  for (const auto& f : polys)
    for (std::size_t i = 0; i < f.size(); ++i) {
      const int a = f[i], b = f[(i + 1) % f.size()];
      if (a != b) edges.push_back({a, b});
    }
  return edges;
}

}  // namespace

MeshGraph TriangleMesh::graph() const {
  std::vector<std::vector<int>> polys;
  polys.reserve(faces.size());
  for (const auto& f : faces) polys.push_back({f[0], f[1], f[2]});
  auto edges = face_edges(polys);
  return MeshGraph(positions, edges);
}

TriangleMesh make_cube_mesh() {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) m.positions.push_back({double(i & 1), double((i >> 1) & 1), double((i >> 2) & 1)});
  const int quads[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4}, {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& q : quads) {
    m.faces.push_back({q[0], q[1], q[2]});
    m.faces.push_back({q[0], q[2], q[3]});
  }
  return m;
}

TriangleMesh make_torus_mesh(int ring, int tube, double major_radius, double minor_radius) {
  if (ring < 3 || tube < 3) throw ConfigError("torus mesh needs at least 3 x 3 vertices");
  TriangleMesh m;
  for (int i = 0; i < ring; ++i) {
    const double u = 2 * std::numbers::pi * i / ring;
    for (int j = 0; j < tube; ++j) {
      const double v = 2 * std::numbers::pi * j / tube;
      const double rr = major_radius + minor_radius * std::cos(v);
      m.positions.push_back({rr * std::cos(u), rr * std::sin(u), minor_radius * std::sin(v)});
    }
  }
  auto id = [&](int i, int j) { return (i % ring) * tube + (j % tube); };
  for (int i = 0; i < ring; ++i)
    for (int j = 0; j < tube; ++j) {
      m.faces.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.faces.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return m;
}

MeshGraph read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open OBJ " + path.string());
  std::vector<Vec3> positions;
  std::vector<std::vector<int>> polys;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 p{};
      if (!(ls >> p[0] >> p[1] >> p[2])) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad vertex");
      positions.push_back(p);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        int idx = 0;
        try {
          idx = std::stoi(tok.substr(0, tok.find('/')));
        } catch (const std::exception&) {
          throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad face index '" + tok + "'");
        }
        idx = idx < 0 ? static_cast<int>(positions.size()) + idx : idx - 1;
        if (idx < 0 || idx >= static_cast<int>(positions.size()))
          throw FormatError(path.string() + ":" + std::to_string(lineno) + ": face index out of range");
        poly.push_back(idx);
      }
      if (poly.size() < 2) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": degenerate face");
      polys.push_back(std::move(poly));
    }
  }
  if (positions.empty()) throw FormatError(path.string() + ": no vertices");
  auto edges = face_edges(polys);
  return MeshGraph(std::move(positions), edges);
}

void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write OBJ " + path.string());
  for (const auto& p : mesh.positions) out << "v " << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
  for (const auto& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

void write_ply(const std::filesystem::path& path, const MeshGraph& mesh, const ChemState<float>& state) {
  if (state.cells() != mesh.vertex_count()) throw ContractError("PLY export: state does not match mesh");
  const Matrix<float> rgb = to_display_rgb(state);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write PLY " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << mesh.vertex_count()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  for (int v = 0; v < mesh.vertex_count(); ++v) {
    const auto& p = mesh.positions()[v];
    out << p[0] << ' ' << p[1] << ' ' << p[2];
    for (int c = 0; c < 3; ++c) out << ' ' << std::lround(rgb(c, v) * 255.0f);
    out << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace nrd
