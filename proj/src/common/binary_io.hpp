#pragma once

// Little-endian byte packing shared by the volume and checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <string_view>
#include <vector>

#include "vxseg/errors.hpp"

namespace vxseg::detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v), 4); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void f32s(const float* p, std::size_t n) {
    if constexpr (std::endian::native == std::endian::little) {
      const auto* b = reinterpret_cast<const std::uint8_t*>(p);
      buf_.insert(buf_.end(), b, b + n * 4);
    } else {
      for (std::size_t i = 0; i < n; ++i) f32(p[i]);
    }
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  const std::vector<std::uint8_t>& buffer() const { return buf_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(concat("cannot open ", path.string(), " for writing"));
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) throw IoError(concat("write to ", path.string(), " failed"));
  }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<std::uint8_t> data, std::string what)
      : data_(std::move(data)), what_(std::move(what)) {}

  static ByteReader load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(concat("cannot open ", path.string(), " for reading"));
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    return ByteReader(std::move(data), path.string());
  }

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1, "u8")); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2, "u16")); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4, "u32")); }
  float f32() { return std::bit_cast<float>(static_cast<std::uint32_t>(get(4, "f32"))); }
  std::string bytes(std::size_t n, const char* field) {
    need(n, field);
    std::string s(reinterpret_cast<const char*>(data_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::string str(const char* field) { return bytes(u32(), field); }
  void f32s(float* p, std::size_t n, const char* field) {
    need(n * 4, field);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(p, data_.data() + pos_, n * 4);
      pos_ += n * 4;
    } else {
      for (std::size_t i = 0; i < n; ++i) p[i] = f32();
    }
  }

  std::size_t remaining() const { return data_.size() - pos_; }
  const std::string& what() const { return what_; }

 private:
  void need(std::size_t n, const char* field) {
    if (data_.size() - pos_ < n)
      throw FormatError(concat(what_, ": truncated while reading ", field, " (need ", n,
                               " bytes at offset ", pos_, ", file has ", data_.size(), ")"));
  }
  std::uint64_t get(int n, const char* field) {
    need(static_cast<std::size_t>(n), field);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::vector<std::uint8_t> data_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace vxseg::detail
