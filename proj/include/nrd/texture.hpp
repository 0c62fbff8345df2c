#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nrd/features.hpp"

namespace nrd {

// Per selected layer, A^T A / (H W) where A is the (H W) x C activation matrix.
template <typename T>
struct GramDescriptor {
  std::vector<Matrix<T>> grams;
};

template <typename T>
GramDescriptor<T> extract_descriptor(const FeatureMap<T>& rgb, const FeatureExtractor<T>& fx,
                                     const std::vector<int>& layers);

// Sum over layers of ||G_a - G_b||_F^2 / C^2.
template <typename T>
T descriptor_distance(const GramDescriptor<T>& a, const GramDescriptor<T>& b);

// Descriptors of a target image at N evenly spaced rotations.
template <typename T>
struct TextureTargetBank {
  std::shared_ptr<const FeatureExtractor<T>> extractor;
  std::vector<int> layers;
  std::vector<double> angles_deg;
  std::vector<GramDescriptor<T>> rotations;
  Image source_image;

  int size() const { return static_cast<int>(rotations.size()); }
};

struct BankOptions {
  int n_rot = 16;
  // Side of the square each rotated crop is resampled to; 0 keeps the
  // inscribed square's native resolution.
  int output_size = 0;
  std::vector<std::string> layers;  // empty: extractor default
};

// Rotation k uses 360 k / n_rot degrees. Each rotated copy is the bilinear
// resample of the centred inscribed square.
template <typename T>
TextureTargetBank<T> build_target_bank(const Image& image, std::shared_ptr<const FeatureExtractor<T>> fx,
                                       const BankOptions& opts);

template <typename T>
struct TextureLoss {
  T loss = T(0);                          // mean over the batch
  std::vector<T> per_sample;              // min over rotations, per sample
  std::vector<int> best_rotation;         // argmin, lowest index on ties
  std::vector<FeatureMap<T>> gradients;   // dL/d(sample rgb), only via the argmin
};

// Rotation-invariant Gram loss. When `want_gradients` is false the adjoint
// pass is skipped and `gradients` stays empty.
template <typename T>
TextureLoss<T> texture_loss(std::span<const FeatureMap<T>> batch, const TextureTargetBank<T>& bank,
                            bool want_gradients = true);

// Reshapes a 3 x cells grid readout into an image.
template <typename T>
FeatureMap<T> rgb_image(const Matrix<T>& rgb, int height, int width);

}  // namespace nrd
