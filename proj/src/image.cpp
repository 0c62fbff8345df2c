#include "nrd/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>
#include <vector>

#include "nrd/errors.hpp"
#include "nrd/rng.hpp"

namespace nrd {

Image read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) throw IoError("cannot open PNG " + path.string());
  if (!png_image_begin_read_from_file(&png, path.string().c_str()))
    throw FormatError("cannot read PNG " + path.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&png);
    throw FormatError("cannot decode PNG " + path.string() + ": " + png.message);
  }
  Image img(3, static_cast<int>(png.height), static_cast<int>(png.width));
  for (Index p = 0; p < img.pixels(); ++p)
    for (int c = 0; c < 3; ++c) img.data(c, p) = buf[p * 3 + c] / 255.0f;
  return img;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  if (image.channels() != 1 && image.channels() != 3) throw ContractError("PNG output needs 1 or 3 channels");
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = image.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  const int ch = image.channels();
  std::vector<png_byte> buf(static_cast<std::size_t>(image.pixels()) * ch);
  for (Index p = 0; p < image.pixels(); ++p)
    for (int c = 0; c < ch; ++c) {
      float v = std::clamp(image.data(c, p), 0.0f, 1.0f);
      buf[p * ch + c] = static_cast<png_byte>(std::lround(v * 255.0f));
    }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!png_image_write_to_file(&png, path.string().c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string() + ": " + png.message);
}

float sample_bilinear(const Image& img, int channel, double y, double x) {
  y = std::clamp(y, 0.0, img.height - 1.0);
  x = std::clamp(x, 0.0, img.width - 1.0);
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - y0, fx = x - x0;
  const double top = img.at(channel, y0, x0) * (1 - fx) + img.at(channel, y0, x1) * fx;
  const double bot = img.at(channel, y1, x0) * (1 - fx) + img.at(channel, y1, x1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

double inscribed_square_side(const Image& img) {
  return std::min(img.height, img.width) / std::numbers::sqrt2;
}

Image rotate_crop(const Image& img, double degrees, double crop_side, int out_size) {
  if (out_size < 1) throw ContractError("rotate_crop: output size must be positive");
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta), sn = std::sin(theta);
  const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
  const double oc = (out_size - 1) / 2.0;
  const double scale = crop_side / out_size;
  Image out(img.channels(), out_size, out_size);
  for (int y = 0; y < out_size; ++y)
    for (int x = 0; x < out_size; ++x) {
      const double u = (x - oc) * scale, v = (y - oc) * scale;
      // Rotating the image by +theta means sampling the source at -theta.
      const double sx = cx + cs * u - sn * v;
      const double sy = cy + sn * u + cs * v;
      for (int c = 0; c < img.channels(); ++c) out.at(c, y, x) = sample_bilinear(img, c, sy, sx);
    }
  return out;
}

Image tile(const Image& img, int ny, int nx) {
  Image out(img.channels(), img.height * ny, img.width * nx);
  for (int y = 0; y < out.height; ++y)
    for (int x = 0; x < out.width; ++x)
      for (int c = 0; c < img.channels(); ++c) out.at(c, y, x) = img.at(c, y % img.height, x % img.width);
  return out;
}

namespace {

constexpr float kDark[3] = {0.12f, 0.16f, 0.42f};
constexpr float kLight[3] = {0.96f, 0.86f, 0.36f};

void paint(Image& img, int y, int x, double t) {
  for (int c = 0; c < 3; ++c) img.at(c, y, x) = static_cast<float>(kDark[c] + (kLight[c] - kDark[c]) * t);
}

}  // namespace

Image make_stripes(int size, double period, double degrees, std::uint64_t seed) {
  Rng rng(splitmix64(seed));
  const double phase = std::uniform_real_distribution<double>(0.0, 2 * std::numbers::pi)(rng);
  const double theta = degrees * std::numbers::pi / 180.0;
  const double nx = std::cos(theta), ny = std::sin(theta);
  Image img(3, size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double s = std::sin(2 * std::numbers::pi * (x * nx + y * ny) / period + phase);
      paint(img, y, x, 1.0 / (1.0 + std::exp(-4.0 * s)));
    }
  return img;
}

Image make_dots(int size, double spacing, double radius, std::uint64_t seed) {
  Rng rng(splitmix64(seed));
  std::uniform_real_distribution<double> jitter(-0.15 * spacing, 0.15 * spacing);
  std::vector<std::array<double, 2>> centres;
  const int per_row = std::max(1, static_cast<int>(std::round(size / spacing)));
  const double step = static_cast<double>(size) / per_row;
  for (int i = 0; i < per_row; ++i)
    for (int j = 0; j < per_row; ++j) centres.push_back({(i + 0.5) * step + jitter(rng), (j + 0.5) * step + jitter(rng)});
  Image img(3, size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double best = 1e30;
      for (const auto& c : centres) {
        double dy = std::fabs(y - c[0]), dx = std::fabs(x - c[1]);
        dy = std::min(dy, size - dy);
        dx = std::min(dx, size - dx);
        best = std::min(best, dy * dy + dx * dx);
      }
      const double t = 1.0 / (1.0 + std::exp(-2.0 * (std::sqrt(best) - radius)));
      paint(img, y, x, t);
    }
  return img;
}

Image load_target(const std::string& spec, int size_hint) {
  const std::string prefix = "procedural:";
  if (spec.rfind(prefix, 0) == 0) {
    const std::string kind = spec.substr(prefix.size());
    if (kind == "stripes") return make_stripes(size_hint, 8.0, 30.0, 1);
    if (kind == "dots") return make_dots(size_hint, 10.0, 2.5, 1);
    throw ConfigError("unknown procedural target '" + kind + "' (expected stripes or dots)");
  }
  return read_png(spec);
}

std::uint64_t image_hash(const Image& img) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(img.channels()));
  mix(static_cast<std::uint64_t>(img.height));
  mix(static_cast<std::uint64_t>(img.width));
  for (Index i = 0; i < img.data.size(); ++i) {
    std::uint32_t bits;
    float v = img.data.data()[i];
    std::memcpy(&bits, &v, sizeof(bits));
    mix(bits);
  }
  return h;
}

}  // namespace nrd
