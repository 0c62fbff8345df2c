#include "nrd/binary_io.hpp"

#include <zlib.h>

#include <fstream>
#include <iterator>

namespace nrd {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = ::crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void ByteWriter::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

ByteReader ByteReader::open(const std::filesystem::path& path, std::string what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ByteReader(std::move(bytes), std::move(what));
}

void ByteReader::expect_magic(std::string_view magic) {
  auto got = get_bytes(magic.size());
  if (!std::equal(got.begin(), got.end(), magic.begin())) fail("bad magic, expected \"" + std::string(magic) + "\"");
}

std::string ByteReader::get_string(std::size_t max_len) {
  const auto len = get<std::uint32_t>();
  if (len > max_len) fail("string length " + std::to_string(len) + " exceeds limit");
  auto b = get_bytes(len);
  return std::string(b.begin(), b.end());
}

void ByteReader::verify_checksum() {
  const std::size_t body = pos_;
  const auto stored = get<std::uint32_t>();
  const auto actual = crc32(std::span<const std::uint8_t>(buf_.data(), body));
  if (stored != actual) fail("checksum mismatch");
}

void ByteReader::expect_end() {
  if (remaining() != 0) fail(std::to_string(remaining()) + " trailing bytes");
}

void ByteReader::fail(const std::string& why) const {
  throw FormatError(what_ + ": " + why + " (at byte " + std::to_string(pos_) + ")");
}

}  // namespace nrd
