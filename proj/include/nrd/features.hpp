#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nrd/image.hpp"

namespace nrd {

enum class Activation : std::uint32_t { none = 0, relu = 1, swish5 = 2 };
// avg2 and max2 halve the resolution; blur is a stride-1 binomial
// [1 4 6 4 1] / 16 filter (separable, circular) with taps `dilation` apart.
enum class Pooling : std::uint32_t { none = 0, avg2 = 1, max2 = 2, blur = 3 };
enum class Padding : std::uint32_t { zero = 0, circular = 1 };

// One node of a feed-forward extractor. The node reads the output of layer
// `source` (-1 is the preprocessed image), optionally pools it, then applies
// an odd-sized "same" convolution (taps `dilation` apart) and an activation.
// A node with out_channels == 0 has no convolution and only pools.
template <typename T>
struct FeatureLayer {
  std::string name;
  int source = -1;
  Pooling pool = Pooling::none;
  Padding padding = Padding::circular;
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 0;
  int dilation = 1;
  std::vector<T> weights;  // out x in x k x k
  std::vector<T> bias;     // out
  Activation activation = Activation::none;

  bool has_conv() const { return out_channels > 0; }
};

template <typename T>
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  FeatureExtractor(std::vector<FeatureLayer<T>> layers, std::array<T, 3> mean, std::array<T, 3> scale,
                   std::vector<std::string> default_selection);

  const std::vector<FeatureLayer<T>>& layers() const { return layers_; }
  const std::array<T, 3>& mean() const { return mean_; }
  const std::array<T, 3>& scale() const { return scale_; }
  const std::vector<std::string>& default_selection() const { return default_selection_; }

  // Resolves layer names to indices; empty selects the default set.
  std::vector<int> select(const std::vector<std::string>& names) const;
  // Channel count produced by each layer.
  int output_channels(int layer) const;
  // Number of resolution-halving pools on the path from the image to `layer`.
  int pool_depth(int layer) const;

  template <typename U>
  FeatureExtractor<U> cast() const;

 private:
  void validate() const;

  std::vector<FeatureLayer<T>> layers_;
  std::array<T, 3> mean_{};
  std::array<T, 3> scale_{T(1), T(1), T(1)};
  std::vector<std::string> default_selection_;
};

// Forward pass that retains every intermediate needed for the adjoint.
template <typename T>
class FeaturePass {
 public:
  // Runs the image through every layer up to the deepest of `needed`.
  FeaturePass(const FeatureExtractor<T>& fx, const FeatureMap<T>& rgb, const std::vector<int>& needed);

  const FeatureMap<T>& output(int layer) const { return outputs_[layer]; }

  // Given dL/d(output) for some layers (others zero), returns dL/d(rgb).
  FeatureMap<T> backward(const std::vector<std::pair<int, FeatureMap<T>>>& output_grads) const;

 private:
  const FeatureExtractor<T>* fx_;
  FeatureMap<T> input_;                // preprocessed image
  std::vector<FeatureMap<T>> pooled_;  // per layer: pooled source (conv input)
  std::vector<FeatureMap<T>> preact_;  // per layer: conv output before activation
  std::vector<FeatureMap<T>> outputs_;
  int last_ = -1;
};

// Three-scale fixed bank: the RGB image and two binomial-blurred copies
// (a trous, no subsampling), convolved with 32 orthonormal 5x5x3 filters from
// a fixed seed at dilations 1, 2 and 4, followed by swish5. Every stage is
// circular, so the Gram descriptor is exactly invariant to circular shifts.
// Selected layers: fb0, fb1, fb2.
FeatureExtractor<float> builtin_filter_bank();

// Portable "RDFX" weight file. Little-endian:
//   header : "RDFX" u32 version, u32 layer count, f32 mean[3], f32 scale[3],
//            u32 selection count, then per selected name: u32 length + bytes
//   layer  : u32 name length + bytes, i32 source, u32 pool, u32 padding,
//            u32 activation, u32 out, u32 in, u32 kernel, u32 dilation,
//            f32 weights[out*in*k*k], f32 bias[out]
//   trailer: u32 c, u32 h, u32 w, f32 input[c*h*w],
//            u32 layer index, u32 c, u32 h, u32 w, f32 expected[c*h*w],
//            u32 crc32 of every preceding byte
// The embedded self-test runs `input` through the extractor and compares the
// output of `layer index` with `expected` at max-abs tolerance 1e-4.
inline constexpr std::uint32_t kRdfxVersion = 1;

struct PortableSelfTest {
  FeatureMap<float> input;
  int layer = 0;
  FeatureMap<float> expected;
};

// Writes the extractor with a self-test computed by this implementation.
void save_portable_cnn(const std::filesystem::path& path, const FeatureExtractor<float>& fx,
                       const FeatureMap<float>& self_test_input, int self_test_layer);
// Same, with an externally supplied expected output.
void save_portable_cnn(const std::filesystem::path& path, const FeatureExtractor<float>& fx,
                       const PortableSelfTest& self_test);

// Throws FormatError on bad magic/version/truncation/checksum and
// IntegrityError when the self-test does not reproduce.
FeatureExtractor<float> load_portable_cnn(const std::filesystem::path& path, double self_test_tolerance = 1e-4);

}  // namespace nrd
