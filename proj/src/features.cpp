#include "nrd/features.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "nrd/binary_io.hpp"
#include "nrd/errors.hpp"
#include "nrd/model.hpp"
#include "nrd/rng.hpp"

namespace nrd {

namespace {

template <typename T>
using ConstMatMap = Eigen::Map<const Matrix<T>>;

int wrap_index(int i, int n) { return ((i % n) + n) % n; }

// Column matrix of k x k neighbourhoods (taps `dil` apart), rows ordered
// (channel, dy, dx).
template <typename T>
Matrix<T> im2col(const FeatureMap<T>& in, int k, int dil, Padding pad) {
  const int C = in.channels(), H = in.height, W = in.width, p = k / 2;
  Matrix<T> cols(Index(C) * k * k, in.pixels());
  for (int c = 0; c < C; ++c)
    for (int dy = 0; dy < k; ++dy)
      for (int dx = 0; dx < k; ++dx) {
        T* row = cols.row((Index(c) * k + dy) * k + dx).data();
        for (int y = 0; y < H; ++y) {
          int sy = y + (dy - p) * dil;
          const bool y_out = sy < 0 || sy >= H;
          if (pad == Padding::circular) sy = wrap_index(sy, H);
          for (int x = 0; x < W; ++x) {
            int sx = x + (dx - p) * dil;
            const bool x_out = sx < 0 || sx >= W;
            T v;
            if (pad == Padding::circular)
              v = in.at(c, sy, wrap_index(sx, W));
            else
              v = (y_out || x_out) ? T(0) : in.at(c, sy, sx);
            row[Index(y) * W + x] = v;
          }
        }
      }
  return cols;
}

template <typename T>
void col2im_add(const Matrix<T>& cols, int k, int dil, Padding pad, FeatureMap<T>& grad) {
  const int C = grad.channels(), H = grad.height, W = grad.width, p = k / 2;
  for (int c = 0; c < C; ++c)
    for (int dy = 0; dy < k; ++dy)
      for (int dx = 0; dx < k; ++dx) {
        const T* row = cols.row((Index(c) * k + dy) * k + dx).data();
        for (int y = 0; y < H; ++y) {
          int sy = y + (dy - p) * dil;
          if (pad == Padding::zero && (sy < 0 || sy >= H)) continue;
          sy = wrap_index(sy, H);
          for (int x = 0; x < W; ++x) {
            int sx = x + (dx - p) * dil;
            if (pad == Padding::zero && (sx < 0 || sx >= W)) continue;
            grad.at(c, sy, wrap_index(sx, W)) += row[Index(y) * W + x];
          }
        }
      }
}

// Separable circular [1 4 6 4 1] / 16 blur; symmetric, so it is its own adjoint.
template <typename T>
FeatureMap<T> binomial_blur(const FeatureMap<T>& in, int dil) {
  static constexpr double taps[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const int H = in.height, W = in.width;
  FeatureMap<T> tmp(in.channels(), H, W), out(in.channels(), H, W);
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        T s = T(0);
        for (int t = 0; t < 5; ++t) s += T(taps[t]) * in.at(c, y, wrap_index(x + (t - 2) * dil, W));
        tmp.at(c, y, x) = s;
      }
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        T s = T(0);
        for (int t = 0; t < 5; ++t) s += T(taps[t]) * tmp.at(c, wrap_index(y + (t - 2) * dil, H), x);
        out.at(c, y, x) = s;
      }
  }
  return out;
}

template <typename T>
FeatureMap<T> pool_forward(const FeatureMap<T>& in, Pooling pool, int dil, const std::string& layer) {
  if (pool == Pooling::none) return in;
  if (pool == Pooling::blur) return binomial_blur(in, dil);
  if (in.height < 2 || in.width < 2)
    throw ContractError("image too small for layer '" + layer + "': " + std::to_string(in.height) + "x" +
                        std::to_string(in.width) + " cannot be pooled");
  FeatureMap<T> out(in.channels(), in.height / 2, in.width / 2);
  for (int c = 0; c < in.channels(); ++c)
    for (int y = 0; y < out.height; ++y)
      for (int x = 0; x < out.width; ++x) {
        const T a = in.at(c, 2 * y, 2 * x), b = in.at(c, 2 * y, 2 * x + 1), d = in.at(c, 2 * y + 1, 2 * x),
                e = in.at(c, 2 * y + 1, 2 * x + 1);
        out.at(c, y, x) = pool == Pooling::avg2 ? (a + b + d + e) / T(4) : std::max(std::max(a, b), std::max(d, e));
      }
  return out;
}

template <typename T>
void pool_backward_add(const FeatureMap<T>& in, Pooling pool, int dil, const FeatureMap<T>& grad_out,
                       FeatureMap<T>& grad_in) {
  if (pool == Pooling::none) {
    grad_in.data += grad_out.data;
    return;
  }
  if (pool == Pooling::blur) {
    grad_in.data += binomial_blur(grad_out, dil).data;
    return;
  }
  for (int c = 0; c < in.channels(); ++c)
    for (int y = 0; y < grad_out.height; ++y)
      for (int x = 0; x < grad_out.width; ++x) {
        const T g = grad_out.at(c, y, x);
        if (pool == Pooling::avg2) {
          for (int oy = 0; oy < 2; ++oy)
            for (int ox = 0; ox < 2; ++ox) grad_in.at(c, 2 * y + oy, 2 * x + ox) += g / T(4);
        } else {
          int by = 0, bx = 0;
          T best = in.at(c, 2 * y, 2 * x);
          for (int oy = 0; oy < 2; ++oy)
            for (int ox = 0; ox < 2; ++ox)
              if (in.at(c, 2 * y + oy, 2 * x + ox) > best) {
                best = in.at(c, 2 * y + oy, 2 * x + ox);
                by = oy;
                bx = ox;
              }
          grad_in.at(c, 2 * y + by, 2 * x + bx) += g;
        }
      }
}

template <typename T>
void activate(Matrix<T>& m, Activation a) {
  switch (a) {
    case Activation::none: break;
    case Activation::relu: m = m.cwiseMax(T(0)); break;
    case Activation::swish5: swish5_inplace(m); break;
  }
}

template <typename T>
void activation_backward(const Matrix<T>& preact, Activation a, Matrix<T>& grad) {
  switch (a) {
    case Activation::none: break;
    case Activation::relu: grad = grad.cwiseProduct((preact.array() > T(0)).template cast<T>().matrix()); break;
    case Activation::swish5: {
      Matrix<T> act, slope;
      swish5_with_derivative(preact, act, slope);
      grad.array() *= slope.array();
      break;
    }
  }
}

}  // namespace

template <typename T>
FeatureExtractor<T>::FeatureExtractor(std::vector<FeatureLayer<T>> layers, std::array<T, 3> mean,
                                      std::array<T, 3> scale, std::vector<std::string> default_selection)
    : layers_(std::move(layers)), mean_(mean), scale_(scale), default_selection_(std::move(default_selection)) {
  validate();
}

template <typename T>
void FeatureExtractor<T>::validate() const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.source < -1 || l.source >= static_cast<int>(i))
      throw ContractError("layer '" + l.name + "' reads from a layer that is not before it");
    if (l.dilation < 1) throw ContractError("layer '" + l.name + "' needs a positive dilation");
    if (l.has_conv()) {
      if (l.kernel < 1 || l.kernel % 2 == 0) throw ContractError("layer '" + l.name + "' needs an odd kernel");
      if (l.in_channels != output_channels(l.source))
        throw ContractError("layer '" + l.name + "' expects " + std::to_string(l.in_channels) + " input channels, gets " +
                            std::to_string(output_channels(l.source)));
      if (l.weights.size() != std::size_t(l.out_channels) * l.in_channels * l.kernel * l.kernel)
        throw ContractError("layer '" + l.name + "' weight count does not match its shape");
      if (l.bias.size() != std::size_t(l.out_channels)) throw ContractError("layer '" + l.name + "' bias size mismatch");
    }
  }
  for (const auto& s : default_selection_) (void)select({s});
}

template <typename T>
int FeatureExtractor<T>::output_channels(int layer) const {
  if (layer < 0) return 3;
  const auto& l = layers_[layer];
  return l.has_conv() ? l.out_channels : output_channels(l.source);
}

template <typename T>
int FeatureExtractor<T>::pool_depth(int layer) const {
  if (layer < 0) return 0;
  const auto& l = layers_[layer];
  return pool_depth(l.source) + (l.pool == Pooling::avg2 || l.pool == Pooling::max2 ? 1 : 0);
}

template <typename T>
std::vector<int> FeatureExtractor<T>::select(const std::vector<std::string>& names) const {
  const auto& wanted = names.empty() ? default_selection_ : names;
  std::vector<int> out;
  for (const auto& n : wanted) {
    auto it = std::find_if(layers_.begin(), layers_.end(), [&](const auto& l) { return l.name == n; });
    if (it == layers_.end()) throw ConfigError("feature extractor has no layer named '" + n + "'");
    out.push_back(static_cast<int>(it - layers_.begin()));
  }
  if (out.empty()) throw ConfigError("no feature layers selected");
  return out;
}

template <typename T>
template <typename U>
FeatureExtractor<U> FeatureExtractor<T>::cast() const {
  std::vector<FeatureLayer<U>> ls;
  for (const auto& l : layers_) {
    FeatureLayer<U> o{l.name,   l.source, l.pool, l.padding, l.out_channels, l.in_channels,
                      l.kernel, l.dilation, {},     {},        l.activation};
    o.weights.assign(l.weights.begin(), l.weights.end());
    o.bias.assign(l.bias.begin(), l.bias.end());
    ls.push_back(std::move(o));
  }
  return FeatureExtractor<U>(std::move(ls), {U(mean_[0]), U(mean_[1]), U(mean_[2])},
                             {U(scale_[0]), U(scale_[1]), U(scale_[2])}, default_selection_);
}

template <typename T>
FeaturePass<T>::FeaturePass(const FeatureExtractor<T>& fx, const FeatureMap<T>& rgb, const std::vector<int>& needed)
    : fx_(&fx) {
  if (rgb.channels() != 3) throw ContractError("feature extraction needs a 3-channel image");
  for (int l : needed) last_ = std::max(last_, l);
  input_ = rgb;
  for (int c = 0; c < 3; ++c) input_.data.row(c) = (rgb.data.row(c).array() - fx.mean()[c]) * fx.scale()[c];

  const auto& layers = fx.layers();
  pooled_.resize(last_ + 1);
  preact_.resize(last_ + 1);
  outputs_.resize(last_ + 1);
  for (int i = 0; i <= last_; ++i) {
    const auto& l = layers[i];
    const FeatureMap<T>& src = l.source < 0 ? input_ : outputs_[l.source];
    pooled_[i] = pool_forward(src, l.pool, l.dilation, l.name);
    if (!l.has_conv()) {
      outputs_[i] = pooled_[i];
      continue;
    }
    const auto& in = pooled_[i];
    ConstMatMap<T> w(l.weights.data(), l.out_channels, Index(l.in_channels) * l.kernel * l.kernel);
    Matrix<T> out = w * im2col(in, l.kernel, l.dilation, l.padding);
    for (int o = 0; o < l.out_channels; ++o) out.row(o).array() += l.bias[o];
    preact_[i] = FeatureMap<T>(in.height, in.width, out);
    activate(out, l.activation);
    if (!out.allFinite()) throw DivergenceError(0, -1, "non-finite activation in feature layer '" + l.name + "'");
    outputs_[i] = FeatureMap<T>(in.height, in.width, std::move(out));
  }
}

template <typename T>
FeatureMap<T> FeaturePass<T>::backward(const std::vector<std::pair<int, FeatureMap<T>>>& output_grads) const {
  const auto& layers = fx_->layers();
  std::vector<FeatureMap<T>> grads(last_ + 1);
  for (int i = 0; i <= last_; ++i)
    grads[i] = FeatureMap<T>(outputs_[i].channels(), outputs_[i].height, outputs_[i].width);
  for (const auto& [layer, g] : output_grads) {
    if (layer < 0 || layer > last_) throw ContractError("gradient for a layer that was not computed");
    grads[layer].data += g.data;
  }
  FeatureMap<T> grad_input(3, input_.height, input_.width);

  for (int i = last_; i >= 0; --i) {
    const auto& l = layers[i];
    FeatureMap<T> grad_pooled;
    if (l.has_conv()) {
      Matrix<T> g = grads[i].data;
      activation_backward(preact_[i].data, l.activation, g);
      ConstMatMap<T> w(l.weights.data(), l.out_channels, Index(l.in_channels) * l.kernel * l.kernel);
      Matrix<T> dcols = w.transpose() * g;
      grad_pooled = FeatureMap<T>(l.in_channels, pooled_[i].height, pooled_[i].width);
      col2im_add(dcols, l.kernel, l.dilation, l.padding, grad_pooled);
    } else {
      grad_pooled = grads[i];
    }
    const FeatureMap<T>& src = l.source < 0 ? input_ : outputs_[l.source];
    FeatureMap<T>& gsrc = l.source < 0 ? grad_input : grads[l.source];
    pool_backward_add(src, l.pool, l.dilation, grad_pooled, gsrc);
  }
  for (int c = 0; c < 3; ++c) grad_input.data.row(c) *= fx_->scale()[c];
  return grad_input;
}

FeatureExtractor<float> builtin_filter_bank() {
  constexpr int kFilters = 32, kKernel = 5, kScales = 3;
  constexpr int fan_in = 3 * kKernel * kKernel;
  Rng rng = substream(0x5eedf11eULL, 0);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<FeatureLayer<float>> layers;
  int prev_image = -1;
  for (int s = 0; s < kScales; ++s) {
    if (s > 0) {
      FeatureLayer<float> pyr;
      pyr.name = "pyr" + std::to_string(s);
      pyr.source = prev_image;
      pyr.pool = Pooling::blur;
      pyr.dilation = 1 << (s - 1);
      layers.push_back(pyr);
      prev_image = static_cast<int>(layers.size()) - 1;
    }
    Eigen::MatrixXd g(fan_in, kFilters);
    for (Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
    // Zero-sum kernels per input channel. A flat image then has no features,
    // so matching the target's mean colour alone does not lower the loss;
    // with DC-sensitive filters training settles on a uniform state.
    constexpr int taps = kKernel * kKernel;
    for (int o = 0; o < kFilters; ++o)
      for (int c = 0; c < 3; ++c) g.col(o).segment(c * taps, taps).array() -= g.col(o).segment(c * taps, taps).mean();
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(fan_in, kFilters);

    FeatureLayer<float> conv;
    conv.name = "fb" + std::to_string(s);
    conv.source = prev_image;
    conv.padding = Padding::circular;
    conv.out_channels = kFilters;
    conv.in_channels = 3;
    conv.kernel = kKernel;
    conv.dilation = 1 << s;
    conv.activation = Activation::swish5;
    conv.bias.assign(kFilters, 0.0f);
    conv.weights.resize(std::size_t(kFilters) * fan_in);
    for (int o = 0; o < kFilters; ++o)
      for (int j = 0; j < fan_in; ++j) conv.weights[std::size_t(o) * fan_in + j] = static_cast<float>(q(j, o));
    layers.push_back(std::move(conv));
  }
  return FeatureExtractor<float>(std::move(layers), {0.f, 0.f, 0.f}, {1.f, 1.f, 1.f}, {"fb0", "fb1", "fb2"});
}

namespace {

void put_map(ByteWriter& w, const FeatureMap<float>& m) {
  w.put(static_cast<std::uint32_t>(m.channels()));
  w.put(static_cast<std::uint32_t>(m.height));
  w.put(static_cast<std::uint32_t>(m.width));
  w.put_array<float>({m.data.data(), static_cast<std::size_t>(m.data.size())});
}

FeatureMap<float> get_map(ByteReader& r) {
  const auto c = r.get<std::uint32_t>(), h = r.get<std::uint32_t>(), w = r.get<std::uint32_t>();
  if (c == 0 || h == 0 || w == 0 || c > 4096 || h > 8192 || w > 8192) r.fail("implausible tensor shape");
  auto vals = r.get_array<float>(std::size_t(c) * h * w);
  FeatureMap<float> m(static_cast<int>(c), static_cast<int>(h), static_cast<int>(w));
  std::copy(vals.begin(), vals.end(), m.data.data());
  return m;
}

}  // namespace

void save_portable_cnn(const std::filesystem::path& path, const FeatureExtractor<float>& fx,
                       const PortableSelfTest& st) {
  ByteWriter w;
  w.put_magic("RDFX");
  w.put(kRdfxVersion);
  w.put(static_cast<std::uint32_t>(fx.layers().size()));
  for (float v : fx.mean()) w.put(v);
  for (float v : fx.scale()) w.put(v);
  w.put(static_cast<std::uint32_t>(fx.default_selection().size()));
  for (const auto& s : fx.default_selection()) w.put_string(s);
  for (const auto& l : fx.layers()) {
    w.put_string(l.name);
    w.put(static_cast<std::int32_t>(l.source));
    w.put(static_cast<std::uint32_t>(l.pool));
    w.put(static_cast<std::uint32_t>(l.padding));
    w.put(static_cast<std::uint32_t>(l.activation));
    w.put(static_cast<std::uint32_t>(l.out_channels));
    w.put(static_cast<std::uint32_t>(l.in_channels));
    w.put(static_cast<std::uint32_t>(l.kernel));
    w.put(static_cast<std::uint32_t>(l.dilation));
    w.put_array<float>(l.weights);
    w.put_array<float>(l.bias);
  }
  put_map(w, st.input);
  w.put(static_cast<std::uint32_t>(st.layer));
  put_map(w, st.expected);
  w.put_checksum();
  w.save(path);
}

void save_portable_cnn(const std::filesystem::path& path, const FeatureExtractor<float>& fx,
                       const FeatureMap<float>& self_test_input, int self_test_layer) {
  if (self_test_layer < 0 || self_test_layer >= static_cast<int>(fx.layers().size()))
    throw ContractError("self-test layer index out of range");
  FeaturePass<float> pass(fx, self_test_input, {self_test_layer});
  save_portable_cnn(path, fx, PortableSelfTest{self_test_input, self_test_layer, pass.output(self_test_layer)});
}

FeatureExtractor<float> load_portable_cnn(const std::filesystem::path& path, double self_test_tolerance) {
  ByteReader r = ByteReader::open(path, "portable CNN " + path.string());
  r.expect_magic("RDFX");
  const auto version = r.get<std::uint32_t>();
  if (version != kRdfxVersion) r.fail("unsupported version " + std::to_string(version));
  const auto layer_count = r.get<std::uint32_t>();
  if (layer_count == 0 || layer_count > 4096) r.fail("implausible layer count");
  std::array<float, 3> mean{}, scale{};
  for (auto& v : mean) v = r.get<float>();
  for (auto& v : scale) v = r.get<float>();
  const auto nsel = r.get<std::uint32_t>();
  if (nsel > layer_count) r.fail("more selected layers than layers");
  std::vector<std::string> selection;
  for (std::uint32_t i = 0; i < nsel; ++i) selection.push_back(r.get_string(256));

  std::vector<FeatureLayer<float>> layers;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    FeatureLayer<float> l;
    l.name = r.get_string(256);
    l.source = r.get<std::int32_t>();
    const auto pool = r.get<std::uint32_t>(), pad = r.get<std::uint32_t>(), act = r.get<std::uint32_t>();
    if (pool > 3 || pad > 1 || act > 2) r.fail("unknown layer tag in '" + l.name + "'");
    l.pool = static_cast<Pooling>(pool);
    l.padding = static_cast<Padding>(pad);
    l.activation = static_cast<Activation>(act);
    l.out_channels = static_cast<int>(r.get<std::uint32_t>());
    l.in_channels = static_cast<int>(r.get<std::uint32_t>());
    l.kernel = static_cast<int>(r.get<std::uint32_t>());
    l.dilation = static_cast<int>(r.get<std::uint32_t>());
    if (l.out_channels > 8192 || l.in_channels > 8192 || l.kernel > 31 || l.dilation < 1 || l.dilation > 1024)
      r.fail("implausible layer shape");
    l.weights = r.get_array<float>(std::size_t(l.out_channels) * l.in_channels * l.kernel * l.kernel);
    l.bias = r.get_array<float>(std::size_t(l.out_channels));
    layers.push_back(std::move(l));
  }
  PortableSelfTest st;
  st.input = get_map(r);
  st.layer = static_cast<int>(r.get<std::uint32_t>());
  st.expected = get_map(r);
  r.verify_checksum();
  r.expect_end();

  FeatureExtractor<float> fx;
  try {
    fx = FeatureExtractor<float>(std::move(layers), mean, scale, std::move(selection));
  } catch (const ContractError& e) {
    r.fail(e.what());
  } catch (const ConfigError& e) {
    r.fail(e.what());
  }
  if (st.layer < 0 || st.layer >= static_cast<int>(fx.layers().size())) r.fail("self-test layer out of range");

  FeaturePass<float> pass(fx, st.input, {st.layer});
  const auto& got = pass.output(st.layer);
  if (got.channels() != st.expected.channels() || got.height != st.expected.height || got.width != st.expected.width)
    throw IntegrityError("portable CNN self-test output shape mismatch in " + path.string());
  const double err = (got.data - st.expected.data).cwiseAbs().maxCoeff();
  if (!(err <= self_test_tolerance))
    throw IntegrityError("portable CNN self-test failed in " + path.string() + ": max abs error " + std::to_string(err));
  return fx;
}

template class FeatureExtractor<float>;
template class FeatureExtractor<double>;
template FeatureExtractor<double> FeatureExtractor<float>::cast<double>() const;
template FeatureExtractor<float> FeatureExtractor<float>::cast<float>() const;
template class FeaturePass<float>;
template class FeaturePass<double>;

}  // namespace nrd
