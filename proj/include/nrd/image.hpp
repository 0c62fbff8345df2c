#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "nrd/domain.hpp"

namespace nrd {

// Planar multi-channel image: data is channels x (height * width), row-major
// within each plane.
template <typename T>
struct FeatureMap {
  int height = 0;
  int width = 0;
  Matrix<T> data;

  FeatureMap() = default;
  FeatureMap(int channels, int h, int w) : height(h), width(w), data(Matrix<T>::Zero(channels, Index(h) * w)) {}
  FeatureMap(int h, int w, Matrix<T> d) : height(h), width(w), data(std::move(d)) {}

  int channels() const { return static_cast<int>(data.rows()); }
  Index pixels() const { return Index(height) * width; }
  T& at(int c, int y, int x) { return data(c, Index(y) * width + x); }
  T at(int c, int y, int x) const { return data(c, Index(y) * width + x); }

  template <typename U>
  FeatureMap<U> cast() const {
    return FeatureMap<U>(height, width, data.template cast<U>());
  }
};

using Image = FeatureMap<float>;

// 8-bit PNG I/O. Reading converts gray/alpha/palette to RGB in [0, 1].
Image read_png(const std::filesystem::path& path);
// Values are clamped to [0, 1] and quantised; 1 or 3 channels.
void write_png(const std::filesystem::path& path, const Image& image);

// Bilinear sample at continuous pixel coordinates (pixel centres at integers),
// clamping to the border.
float sample_bilinear(const Image& img, int channel, double y, double x);

// Square output of side `out_size` taken from a `crop_side` x `crop_side`
// window centred on the image and rotated counter-clockwise by `degrees`.
Image rotate_crop(const Image& img, double degrees, double crop_side, int out_size);

// Largest side of a centred square that stays inside the image for every
// rotation angle.
double inscribed_square_side(const Image& img);

// Tile the image `nx` x `ny` times.
Image tile(const Image& img, int ny, int nx);

// Stripes of the given period (pixels) along direction `degrees`; two-colour,
// smooth (sinusoid pushed through a steep sigmoid).
Image make_stripes(int size, double period, double degrees, std::uint64_t seed = 0);
// Dots on a jittered lattice with the given spacing and radius.
Image make_dots(int size, double spacing, double radius, std::uint64_t seed = 0);

// Loads a PNG, or builds a pattern for "procedural:stripes" / "procedural:dots".
Image load_target(const std::string& spec, int size_hint);

std::uint64_t image_hash(const Image& img);

}  // namespace nrd
