#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Core>

namespace nrd {

using Index = Eigen::Index;

// Dense row-major storage; a state is laid out as cells x channels so that the
// reaction network runs as one GEMM over all cells.
template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;

// Periodic 2D grid. Cell (y, x) lives at index y * width + x.
struct Grid2D {
  int height = 0;
  int width = 0;

  Index cells() const { return Index(height) * width; }
  friend bool operator==(const Grid2D&, const Grid2D&) = default;
};

// Periodic 3D grid. Cell (z, y, x) lives at index (z * height + y) * width + x.
struct Volume {
  int depth = 0;
  int height = 0;
  int width = 0;

  Index cells() const { return Index(depth) * height * width; }
  friend bool operator==(const Volume&, const Volume&) = default;
};

using Vec3 = std::array<double, 3>;

// Undirected weighted graph stored as CSR. Every edge appears once in each
// endpoint's neighbor list with the same weight.
class MeshGraph {
 public:
  struct Edge {
    int a;
    int b;
  };

  // Weights default to 1 / max(deg(u), deg(v)). Duplicate edges (in either
  // orientation) are merged; self-loops and out-of-range indices throw.
  MeshGraph(std::vector<Vec3> positions, std::span<const Edge> edges);
  // Explicit per-edge weights, one per entry of `edges` after validation.
  MeshGraph(std::vector<Vec3> positions, std::span<const Edge> edges, std::span<const double> weights);
  // Vertices without geometry.
  MeshGraph(int vertex_count, std::span<const Edge> edges);

  int vertex_count() const { return static_cast<int>(offsets_.size()) - 1; }
  std::size_t edge_count() const { return neighbors_.size() / 2; }
  int degree(int v) const { return offsets_[v + 1] - offsets_[v]; }

  std::span<const int> neighbors(int v) const {
    return {neighbors_.data() + offsets_[v], static_cast<std::size_t>(degree(v))};
  }
  std::span<const double> weights(int v) const {
    return {weights_.data() + offsets_[v], static_cast<std::size_t>(degree(v))};
  }
  const std::vector<Vec3>& positions() const { return positions_; }

  int component_count() const;
  // Hop distance from `source` to every vertex; -1 where unreachable. Stops
  // expanding past `max_hops` when it is non-negative.
  std::vector<int> hop_distances(int source, int max_hops = -1) const;

 private:
  void build(std::span<const Edge> edges, std::span<const double> weights);

  std::vector<Vec3> positions_;
  std::vector<int> offsets_;
  std::vector<int> neighbors_;
  std::vector<double> weights_;
};

using MeshRef = std::shared_ptr<const MeshGraph>;

using Domain = std::variant<Grid2D, Volume, MeshRef>;

Index cell_count(const Domain& domain);
bool same_domain(const Domain& a, const Domain& b);
const char* domain_kind(const Domain& domain);

}  // namespace nrd
