#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "nrd/binary_io.hpp"
#include "nrd/nrd.hpp"

using namespace nrd;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const char* tag) {
  auto d = fs::temp_directory_path() / (std::string("nrd_io_") + tag + "_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(ModelFile, RoundTripIsByteIdentical) {
  const auto dir = scratch_dir("model");
  auto m = make_model<float>({.channels = 8, .hidden = 16, .diffusion = DiffusionMode::learned, .w1_scale = 0.1,
                              .seed = 4});
  save_model(dir / "a.rdmd", m, {0xabcdef, 1234});
  auto loaded = load_model(dir / "a.rdmd");
  EXPECT_EQ(loaded.meta.target_hash, 0xabcdefu);
  EXPECT_EQ(loaded.meta.training_steps, 1234u);
  EXPECT_EQ(loaded.model.diffusion.mode, DiffusionMode::learned);
  EXPECT_EQ((loaded.model.reaction.w1 - m.reaction.w1).cwiseAbs().maxCoeff(), 0.0f);
  save_model(dir / "b.rdmd", loaded.model, loaded.meta);
  EXPECT_EQ(slurp(dir / "a.rdmd"), slurp(dir / "b.rdmd"));
  EXPECT_EQ(model_checksum(m), model_checksum(loaded.model));
  fs::remove_all(dir);
}

TEST(ModelFile, RejectsDamage) {
  auto m = make_model<float>({.channels = 4, .hidden = 4});
  auto bytes = encode_model(m, {});
  EXPECT_NO_THROW(decode_model(bytes));
  auto flipped = bytes;
  flipped[30] ^= 0x80;
  EXPECT_THROW(decode_model(flipped), FormatError);
  EXPECT_THROW(decode_model({bytes.begin(), bytes.end() - 1}), FormatError);
  auto magic = bytes;
  magic[1] = 'X';
  EXPECT_THROW(decode_model(magic), FormatError);
  auto extra = bytes;
  extra.push_back(0);
  EXPECT_THROW(decode_model(extra), FormatError);
  EXPECT_THROW(load_model("/nonexistent/model.rdmd"), IoError);
}

TEST(Binary, Crc32KnownValue) {
  const char* s = "123456789";
  EXPECT_EQ(crc32({reinterpret_cast<const std::uint8_t*>(s), 9}), 0xCBF43926u);
}

TEST(Png, RoundTrip) {
  const auto dir = scratch_dir("png");
  Image img(3, 5, 7);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 5; ++y)
      for (int x = 0; x < 7; ++x) img.at(c, y, x) = float((c * 35 + y * 7 + x) % 256) / 255.0f;
  write_png(dir / "sub" / "a.png", img);
  Image back = read_png(dir / "sub" / "a.png");
  ASSERT_EQ(back.height, 5);
  ASSERT_EQ(back.width, 7);
  ASSERT_EQ(back.channels(), 3);
  EXPECT_LT((back.data - img.data).cwiseAbs().maxCoeff(), 1e-6f);
  EXPECT_THROW(read_png(dir / "missing.png"), IoError);
  {
    std::ofstream o(dir / "junk.png", std::ios::binary);
    o << "definitely not a png";
  }
  EXPECT_THROW(read_png(dir / "junk.png"), FormatError);
  fs::remove_all(dir);
}

TEST(Image, TargetsAndResampling) {
  Image s = load_target("procedural:stripes", 40);
  EXPECT_EQ(s.height, 40);
  EXPECT_EQ(s.channels(), 3);
  EXPECT_GE(s.data.minCoeff(), 0.0f);
  EXPECT_LE(s.data.maxCoeff(), 1.0f);
  EXPECT_EQ(image_hash(s), image_hash(load_target("procedural:stripes", 40)));
  EXPECT_NE(image_hash(s), image_hash(load_target("procedural:dots", 40)));
  EXPECT_THROW(load_target("procedural:plaid", 40), ConfigError);

  EXPECT_NEAR(inscribed_square_side(s), 40 / std::sqrt(2.0), 1e-9);
  Image same = rotate_crop(s, 0.0, 40, 40);
  EXPECT_LT((same.data - s.data).cwiseAbs().maxCoeff(), 1e-6f);
  Image quarter = rotate_crop(s, 90.0, 40, 40);
  // Quarter turn: out(y, x) = in(x, W - 1 - y).
  for (int y = 0; y < 40; y += 7)
    for (int x = 0; x < 40; x += 5) EXPECT_NEAR(quarter.at(0, y, x), s.at(0, x, 39 - y), 1e-5f);

  Image t = tile(make_dots(8, 4.0, 1.0, 1), 2, 3);
  EXPECT_EQ(t.height, 16);
  EXPECT_EQ(t.width, 24);
  EXPECT_EQ(t.at(1, 3, 2), t.at(1, 11, 18));
}
