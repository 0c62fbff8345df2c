#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "nrd/errors.hpp"

namespace nrd {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  template <typename V>
    requires std::is_arithmetic_v<V>
  void put(V v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(V));
  }
  void put_magic(std::string_view magic) { buf_.insert(buf_.end(), magic.begin(), magic.end()); }
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.insert(buf_.end(), s.begin(), s.end());
  }
  template <typename V>
  void put_array(std::span<const V> values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    buf_.insert(buf_.end(), p, p + values.size_bytes());
  }
  void put_bytes(std::span<const std::uint8_t> bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }
  // Appends crc32 of everything written so far.
  void put_checksum() { put(crc32(buf_)); }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> bytes, std::string what)
      : buf_(std::move(bytes)), what_(std::move(what)) {}
  static ByteReader open(const std::filesystem::path& path, std::string what);

  template <typename V>
    requires std::is_arithmetic_v<V>
  V get() {
    need(sizeof(V));
    V v;
    std::memcpy(&v, buf_.data() + pos_, sizeof(V));
    pos_ += sizeof(V);
    return v;
  }
  void expect_magic(std::string_view magic);
  std::string get_string(std::size_t max_len = 1 << 16);
  template <typename V>
  std::vector<V> get_array(std::size_t count) {
    if (count > remaining() / sizeof(V)) fail("truncated array");
    std::vector<V> out(count);
    std::memcpy(out.data(), buf_.data() + pos_, count * sizeof(V));
    pos_ += count * sizeof(V);
    return out;
  }
  std::span<const std::uint8_t> get_bytes(std::size_t count) {
    need(count);
    std::span<const std::uint8_t> s(buf_.data() + pos_, count);
    pos_ += count;
    return s;
  }
  // Reads the trailing crc32 and checks it against every byte before it.
  void verify_checksum();
  void expect_end();

  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }
  [[noreturn]] void fail(const std::string& why) const;

 private:
  void need(std::size_t n) {
    if (n > remaining()) fail("truncated");
  }

  std::vector<std::uint8_t> buf_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace nrd
