#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ppsdepth/errors.hpp"

namespace ppsdepth::io {

using Bytes = std::vector<unsigned char>;

inline Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "' for reading");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write to '" + path + "' failed");
}

inline void append_u32_le(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xFFu));
}

inline void append_f32_le(Bytes& out, float f) { append_u32_le(out, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t load_u32(const unsigned char* p, bool little_endian) {
  std::uint32_t v = 0;
  if (little_endian)
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
  else
    for (int i = 0; i < 4; ++i) v = (v << 8) | p[i];
  return v;
}

inline float load_f32(const unsigned char* p, bool little_endian) {
  return std::bit_cast<float>(load_u32(p, little_endian));
}

/// Sequential reader over an in-memory buffer; every read is bounds-checked.
class ByteReader {
 public:
  ByteReader(std::span<const unsigned char> data, std::string what) : data_(data), what_(std::move(what)) {}

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  const unsigned char* take(std::size_t n) {
    if (remaining() < n) throw FormatError(what_ + ": truncated data");
    const unsigned char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint32_t u32_le() { return load_u32(take(4), true); }
  float f32_le() { return load_f32(take(4), true); }

 private:
  std::span<const unsigned char> data_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace ppsdepth::io
