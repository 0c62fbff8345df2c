#include "nrd/texture.hpp"

#include <cmath>
#include <limits>

#include "nrd/errors.hpp"

namespace nrd {

namespace {

template <typename T>
Matrix<T> gram_of(const FeatureMap<T>& act) {
  return (act.data * act.data.transpose()) / T(act.pixels());
}

template <typename T>
void check_receptive(const FeatureMap<T>& rgb, const FeatureExtractor<T>& fx, const std::vector<int>& layers) {
  int depth = 0;
  for (int l : layers) depth = std::max(depth, fx.pool_depth(l));
  const int need = 1 << depth;
  if (rgb.height < need || rgb.width < need)
    throw ContractError("image " + std::to_string(rgb.height) + "x" + std::to_string(rgb.width) +
                        " is smaller than the selected layers' stride product " + std::to_string(need));
}

}  // namespace

template <typename T>
GramDescriptor<T> extract_descriptor(const FeatureMap<T>& rgb, const FeatureExtractor<T>& fx,
                                     const std::vector<int>& layers) {
  check_receptive(rgb, fx, layers);
  FeaturePass<T> pass(fx, rgb, layers);
  GramDescriptor<T> d;
  for (int l : layers) d.grams.push_back(gram_of(pass.output(l)));
  return d;
}

template <typename T>
T descriptor_distance(const GramDescriptor<T>& a, const GramDescriptor<T>& b) {
  if (a.grams.size() != b.grams.size()) throw ContractError("descriptors have different layer counts");
  T total = T(0);
  for (std::size_t l = 0; l < a.grams.size(); ++l) {
    const T c = T(a.grams[l].rows());
    total += (a.grams[l] - b.grams[l]).squaredNorm() / (c * c);
  }
  return total;
}

template <typename T>
TextureTargetBank<T> build_target_bank(const Image& image, std::shared_ptr<const FeatureExtractor<T>> fx,
                                       const BankOptions& opts) {
  if (opts.n_rot < 1) throw ConfigError("N_rot must be at least 1");
  if (image.channels() != 3) throw ContractError("target image must be RGB");
  TextureTargetBank<T> bank;
  bank.extractor = std::move(fx);
  bank.layers = bank.extractor->select(opts.layers);
  bank.source_image = image;

  const double crop = inscribed_square_side(image);
  int out = opts.output_size;
  if (out <= 0) {
    // Native resolution; keep the parity of the source so that right-angle
    // rotations land on pixel centres.
    out = static_cast<int>(std::floor(crop));
    if ((out - std::min(image.height, image.width)) % 2 != 0) --out;
  }
  const double crop_side = opts.output_size > 0 ? crop : out;

  const float lo = image.data.minCoeff(), hi = image.data.maxCoeff();
  Eigen::VectorXf spread = (image.data.rowwise().maxCoeff() - image.data.rowwise().minCoeff());
  if (spread.maxCoeff() < 1e-6f || hi - lo < 1e-6f)
    warn("target image is uniform; rotated descriptors will be nearly identical");

  for (int k = 0; k < opts.n_rot; ++k) {
    const double angle = 360.0 * k / opts.n_rot;
    Image rotated = rotate_crop(image, angle, crop_side, out);
    bank.angles_deg.push_back(angle);
    bank.rotations.push_back(extract_descriptor(rotated.cast<T>(), *bank.extractor, bank.layers));
  }
  return bank;
}

template <typename T>
TextureLoss<T> texture_loss(std::span<const FeatureMap<T>> batch, const TextureTargetBank<T>& bank,
                            bool want_gradients) {
  if (batch.empty()) throw ContractError("texture loss needs a non-empty batch");
  if (bank.rotations.empty()) throw ContractError("texture loss needs a non-empty target bank");
  const auto& fx = *bank.extractor;
  TextureLoss<T> out;
  const T inv_batch = T(1) / T(batch.size());
  for (const auto& sample : batch) {
    check_receptive(sample, fx, bank.layers);
    FeaturePass<T> pass(fx, sample, bank.layers);
    GramDescriptor<T> d;
    for (int l : bank.layers) d.grams.push_back(gram_of(pass.output(l)));

    int best = 0;
    T best_loss = std::numeric_limits<T>::infinity();
    for (int k = 0; k < bank.size(); ++k) {
      const T dist = descriptor_distance(d, bank.rotations[k]);
      if (dist < best_loss) {
        best_loss = dist;
        best = k;
      }
    }
    if (!std::isfinite(best_loss)) throw DivergenceError(0, -1, "non-finite texture loss");
    out.per_sample.push_back(best_loss);
    out.best_rotation.push_back(best);
    out.loss += best_loss * inv_batch;

    if (want_gradients) {
      // d/dA of ||A^T A / P - G||^2 / C^2 = 4 A (A^T A / P - G) / (P C^2),
      // with A stored here as C x P.
      std::vector<std::pair<int, FeatureMap<T>>> grads;
      for (std::size_t i = 0; i < bank.layers.size(); ++i) {
        const auto& act = pass.output(bank.layers[i]);
        const T c = T(act.channels()), p = T(act.pixels());
        Matrix<T> diff = d.grams[i] - bank.rotations[best].grams[i];
        Matrix<T> g = (T(4) * inv_batch / (p * c * c)) * (diff * act.data);
        grads.emplace_back(bank.layers[i], FeatureMap<T>(act.height, act.width, std::move(g)));
      }
      out.gradients.push_back(pass.backward(grads));
    }
  }
  return out;
}

template <typename T>
FeatureMap<T> rgb_image(const Matrix<T>& rgb, int height, int width) {
  if (rgb.rows() != 3 || rgb.cols() != Index(height) * width) throw ContractError("RGB readout shape mismatch");
  return FeatureMap<T>(height, width, rgb);
}

#define NRD_INSTANTIATE(T)                                                                                          \
  template GramDescriptor<T> extract_descriptor<T>(const FeatureMap<T>&, const FeatureExtractor<T>&,                \
                                                   const std::vector<int>&);                                        \
  template T descriptor_distance<T>(const GramDescriptor<T>&, const GramDescriptor<T>&);                            \
  template TextureTargetBank<T> build_target_bank<T>(const Image&, std::shared_ptr<const FeatureExtractor<T>>,      \
                                                     const BankOptions&);                                           \
  template TextureLoss<T> texture_loss<T>(std::span<const FeatureMap<T>>, const TextureTargetBank<T>&, bool);       \
  template FeatureMap<T> rgb_image<T>(const Matrix<T>&, int, int);

NRD_INSTANTIATE(float)
NRD_INSTANTIATE(double)

}  // namespace nrd
