#include "nrd/domain.hpp"

#include <algorithm>
#include <deque>
#include <numeric>
#include <string>

#include "nrd/errors.hpp"

namespace nrd {

namespace {

std::vector<MeshGraph::Edge> canonical_edges(int vertex_count, std::span<const MeshGraph::Edge> edges) {
  std::vector<MeshGraph::Edge> out;
  out.reserve(edges.size());
  for (auto e : edges) {
    if (e.a < 0 || e.b < 0 || e.a >= vertex_count || e.b >= vertex_count)
      throw ContractError("mesh edge references vertex outside [0, " + std::to_string(vertex_count) + ")");
    if (e.a == e.b) throw ContractError("mesh edge is a self-loop at vertex " + std::to_string(e.a));
    out.push_back({std::min(e.a, e.b), std::max(e.a, e.b)});
  }
  return out;
}

}  // namespace

MeshGraph::MeshGraph(std::vector<Vec3> positions, std::span<const Edge> edges)
    : positions_(std::move(positions)) {
  build(edges, {});
}

MeshGraph::MeshGraph(std::vector<Vec3> positions, std::span<const Edge> edges, std::span<const double> weights)
    : positions_(std::move(positions)) {
  if (weights.size() != edges.size()) throw ContractError("mesh weight count does not match edge count");
  build(edges, weights);
}

MeshGraph::MeshGraph(int vertex_count, std::span<const Edge> edges)
    : positions_(static_cast<std::size_t>(vertex_count), Vec3{0.0, 0.0, 0.0}) {
  build(edges, {});
}

void MeshGraph::build(std::span<const Edge> edges, std::span<const double> weights) {
  const int n = static_cast<int>(positions_.size());
  auto canon = canonical_edges(n, edges);

  std::vector<std::size_t> order(canon.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return std::pair(canon[i].a, canon[i].b) < std::pair(canon[j].a, canon[j].b);
  });
  std::vector<Edge> unique;
  std::vector<double> unique_w;
  for (std::size_t k : order) {
    if (!unique.empty() && unique.back().a == canon[k].a && unique.back().b == canon[k].b) {
      if (!weights.empty() && weights[k] != unique_w.back())
        throw ContractError("duplicate mesh edge with conflicting weights");
      continue;
    }
    unique.push_back(canon[k]);
    if (!weights.empty()) unique_w.push_back(weights[k]);
  }

  std::vector<int> deg(n, 0);
  for (auto e : unique) {
    ++deg[e.a];
    ++deg[e.b];
  }
  if (weights.empty()) {
    unique_w.reserve(unique.size());
    for (auto e : unique) unique_w.push_back(1.0 / std::max(deg[e.a], deg[e.b]));
  }
  for (double w : unique_w)
    if (!(w > 0.0)) throw ContractError("mesh edge weights must be positive");

  offsets_.assign(n + 1, 0);
  for (int v = 0; v < n; ++v) offsets_[v + 1] = offsets_[v] + deg[v];
  neighbors_.assign(offsets_[n], 0);
  weights_.assign(offsets_[n], 0.0);
  std::vector<int> fill(offsets_.begin(), offsets_.end() - 1);
  for (std::size_t k = 0; k < unique.size(); ++k) {
    auto [a, b] = unique[k];
    neighbors_[fill[a]] = b;
    weights_[fill[a]++] = unique_w[k];
    neighbors_[fill[b]] = a;
    weights_[fill[b]++] = unique_w[k];
  }
}

std::vector<int> MeshGraph::hop_distances(int source, int max_hops) const {
  std::vector<int> dist(vertex_count(), -1);
  std::deque<int> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    int v = queue.front();
    queue.pop_front();
    if (max_hops >= 0 && dist[v] >= max_hops) continue;
    for (int u : neighbors(v)) {
      if (dist[u] < 0) {
        dist[u] = dist[v] + 1;
        queue.push_back(u);
      }
    }
  }
  return dist;
}

int MeshGraph::component_count() const {
  std::vector<char> seen(vertex_count(), 0);
  int components = 0;
  std::vector<int> stack;
  for (int s = 0; s < vertex_count(); ++s) {
    if (seen[s]) continue;
    ++components;
    seen[s] = 1;
    stack.push_back(s);
    while (!stack.empty()) {
      int v = stack.back();
      stack.pop_back();
      for (int u : neighbors(v))
        if (!seen[u]) {
          seen[u] = 1;
          stack.push_back(u);
        }
    }
  }
  return components;
}

Index cell_count(const Domain& domain) {
  return std::visit(
      [](const auto& d) -> Index {
        using D = std::decay_t<decltype(d)>;
        if constexpr (std::is_same_v<D, MeshRef>)
          return d ? d->vertex_count() : 0;
        else
          return d.cells();
      },
      domain);
}

bool same_domain(const Domain& a, const Domain& b) {
  if (a.index() != b.index()) return false;
  if (auto* g = std::get_if<Grid2D>(&a)) return *g == std::get<Grid2D>(b);
  if (auto* v = std::get_if<Volume>(&a)) return *v == std::get<Volume>(b);
  return std::get<MeshRef>(a).get() == std::get<MeshRef>(b).get();
}

const char* domain_kind(const Domain& domain) {
  switch (domain.index()) {
    case 0: return "grid2d";
    case 1: return "volume";
    default: return "mesh";
  }
}

}  // namespace nrd
