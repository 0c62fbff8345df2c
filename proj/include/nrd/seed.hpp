#pragma once

#include <cstdint>

#include "nrd/model.hpp"

namespace nrd {

template <typename T>
struct Interval {
  T lo;
  T hi;
};

// Sparse Gaussian blobs. Each blob adds, per channel, an independent amplitude
// times a Gaussian bump that is shifted and rescaled to reach exactly zero at
// radius 2 sigma, so cells away from every blob are exactly zero.
struct SeedSpec {
  Interval<int> blob_count{4, 16};
  Interval<double> sigma{1.5, 4.0};
  Interval<double> amplitude{-0.5, 0.5};
  std::uint64_t rng_seed = 0;

  void validate() const;
};

// Radius (in sigmas) at which a blob's support ends.
inline constexpr double kBlobSupportSigmas = 2.0;

// Blob profile at distance `dist` for width `sigma`, peak 1, zero beyond support.
double blob_profile(double dist, double sigma);

// Deterministic in spec.rng_seed. Grid and volume blobs use periodic Euclidean
// distance from a continuous random centre; mesh blobs use hop distance from a
// random vertex.
template <typename T>
ChemState<T> make_seed(const SeedSpec& spec, const Domain& domain, int channels);

}  // namespace nrd
