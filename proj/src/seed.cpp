#include "nrd/seed.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "nrd/errors.hpp"
#include "nrd/rng.hpp"

namespace nrd {

void SeedSpec::validate() const {
  if (blob_count.lo < 1 || blob_count.hi < blob_count.lo)
    throw ConfigError("seed blob count range [" + std::to_string(blob_count.lo) + ", " +
                      std::to_string(blob_count.hi) + "] is empty");
  if (!(sigma.lo > 0.0) || sigma.hi < sigma.lo) throw ConfigError("seed sigma range must be positive and ordered");
  if (amplitude.hi < amplitude.lo) throw ConfigError("seed amplitude range is empty");
}

double blob_profile(double dist, double sigma) {
  const double reach = kBlobSupportSigmas * sigma;
  if (dist >= reach) return 0.0;
  const double floor = std::exp(-0.5 * kBlobSupportSigmas * kBlobSupportSigmas);
  return (std::exp(-0.5 * dist * dist / (sigma * sigma)) - floor) / (1.0 - floor);
}

namespace {

double wrapped_delta(double a, double b, int period) {
  double d = std::fabs(a - b);
  return std::min(d, period - d);
}

template <typename T>
void add_grid_blob(Matrix<T>& v, const Grid2D& g, double cy, double cx, double sigma, const std::vector<double>& amp) {
  const int reach = static_cast<int>(std::ceil(kBlobSupportSigmas * sigma));
  const int y0 = static_cast<int>(std::floor(cy)), x0 = static_cast<int>(std::floor(cx));
  const int ny = std::min(g.height, 2 * reach + 2), nx = std::min(g.width, 2 * reach + 2);
  for (int oy = 0; oy < ny; ++oy) {
    const int y = ((y0 - reach + oy) % g.height + g.height) % g.height;
    for (int ox = 0; ox < nx; ++ox) {
      const int x = ((x0 - reach + ox) % g.width + g.width) % g.width;
      const double dy = wrapped_delta(y, cy, g.height), dx = wrapped_delta(x, cx, g.width);
      const double w = blob_profile(std::sqrt(dy * dy + dx * dx), sigma);
      if (w <= 0.0) continue;
      auto row = v.row(Index(y) * g.width + x);
      for (Index k = 0; k < row.size(); ++k) row[k] += T(w * amp[k]);
    }
  }
}

template <typename T>
void add_volume_blob(Matrix<T>& v, const Volume& vol, const std::array<double, 3>& c, double sigma,
                     const std::vector<double>& amp) {
  const int reach = static_cast<int>(std::ceil(kBlobSupportSigmas * sigma));
  const int dims[3] = {vol.depth, vol.height, vol.width};
  int start[3], count[3];
  for (int a = 0; a < 3; ++a) {
    start[a] = static_cast<int>(std::floor(c[a])) - reach;
    count[a] = std::min(dims[a], 2 * reach + 2);
  }
  for (int oz = 0; oz < count[0]; ++oz) {
    const int z = ((start[0] + oz) % dims[0] + dims[0]) % dims[0];
    const double dz = wrapped_delta(z, c[0], dims[0]);
    for (int oy = 0; oy < count[1]; ++oy) {
      const int y = ((start[1] + oy) % dims[1] + dims[1]) % dims[1];
      const double dy = wrapped_delta(y, c[1], dims[1]);
      for (int ox = 0; ox < count[2]; ++ox) {
        const int x = ((start[2] + ox) % dims[2] + dims[2]) % dims[2];
        const double dx = wrapped_delta(x, c[2], dims[2]);
        const double w = blob_profile(std::sqrt(dz * dz + dy * dy + dx * dx), sigma);
        if (w <= 0.0) continue;
        auto row = v.row((Index(z) * vol.height + y) * vol.width + x);
        for (Index k = 0; k < row.size(); ++k) row[k] += T(w * amp[k]);
      }
    }
  }
}

template <typename T>
void add_mesh_blob(Matrix<T>& v, const MeshGraph& mesh, int centre, double sigma, const std::vector<double>& amp) {
  const int reach = static_cast<int>(std::ceil(kBlobSupportSigmas * sigma));
  const auto hops = mesh.hop_distances(centre, reach);
  for (int u = 0; u < mesh.vertex_count(); ++u) {
    if (hops[u] < 0) continue;
    const double w = blob_profile(hops[u], sigma);
    if (w <= 0.0) continue;
    auto row = v.row(u);
    for (Index k = 0; k < row.size(); ++k) row[k] += T(w * amp[k]);
  }
}

}  // namespace

template <typename T>
ChemState<T> make_seed(const SeedSpec& spec, const Domain& domain, int channels) {
  spec.validate();
  if (channels < 1) throw ContractError("seed needs at least one channel");
  if (cell_count(domain) < 1) throw ContractError("seed domain has no cells");
  if (spec.amplitude.lo == 0.0 && spec.amplitude.hi == 0.0) warn("seed amplitude range is [0, 0]; seed is all zeros");

  ChemState<T> s(domain, channels);
  Rng rng(splitmix64(spec.rng_seed));
  std::uniform_int_distribution<int> count_dist(spec.blob_count.lo, spec.blob_count.hi);
  std::uniform_real_distribution<double> sigma_dist(spec.sigma.lo, spec.sigma.hi);
  std::uniform_real_distribution<double> amp_dist(spec.amplitude.lo, spec.amplitude.hi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const int blobs = count_dist(rng);
  std::vector<double> amp(channels);
  for (int b = 0; b < blobs; ++b) {
    std::array<double, 3> centre{};
    int vertex = 0;
    if (auto* g = std::get_if<Grid2D>(&domain)) {
      centre = {unit(rng) * g->height, unit(rng) * g->width, 0.0};
    } else if (auto* vol = std::get_if<Volume>(&domain)) {
      centre = {unit(rng) * vol->depth, unit(rng) * vol->height, unit(rng) * vol->width};
    } else {
      const auto& mesh = std::get<MeshRef>(domain);
      vertex = std::uniform_int_distribution<int>(0, mesh->vertex_count() - 1)(rng);
    }
    const double sigma = sigma_dist(rng);
    for (auto& a : amp) a = amp_dist(rng);

    if (auto* g = std::get_if<Grid2D>(&domain))
      add_grid_blob(s.values, *g, centre[0], centre[1], sigma, amp);
    else if (auto* vol = std::get_if<Volume>(&domain))
      add_volume_blob(s.values, *vol, centre, sigma, amp);
    else
      add_mesh_blob(s.values, *std::get<MeshRef>(domain), vertex, sigma, amp);
  }
  return s;
}

template ChemState<float> make_seed<float>(const SeedSpec&, const Domain&, int);
template ChemState<double> make_seed<double>(const SeedSpec&, const Domain&, int);

}  // namespace nrd
