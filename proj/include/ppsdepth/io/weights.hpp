#pragma once

#include <cmath>
#include <string>

#include "ppsdepth/io/binary.hpp"
#include "ppsdepth/ppsnet_toy.hpp"

namespace ppsdepth::io {

inline constexpr std::uint32_t kWeightsVersion = 1;

/// Layout (all integers u32 little-endian):
///   "PPSW" version count
///   count x { name_len name_bytes rank dims[rank] f32[prod(dims)] }
/// Tensors are written in name order so encoding is deterministic.
inline Bytes encode_weights(const ToyWeights& w) {
  Bytes out{'P', 'P', 'S', 'W'};
  append_u32_le(out, kWeightsVersion);
  append_u32_le(out, static_cast<std::uint32_t>(w.tensors.size()));
  for (const auto& [name, t] : w.tensors) {
    if (t.values.size() != t.numel())
      throw std::invalid_argument("weights: tensor '" + name + "' has " + std::to_string(t.values.size()) +
                                  " values for " + std::to_string(t.numel()) + " elements");
    append_u32_le(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    append_u32_le(out, static_cast<std::uint32_t>(t.dims.size()));
    for (std::uint32_t d : t.dims) append_u32_le(out, d);
    for (float f : t.values) append_f32_le(out, f);
  }
  return out;
}

inline ToyWeights decode_weights(std::span<const unsigned char> data) {
  ByteReader in(data, "weights");
  const unsigned char* magic = in.take(4);
  if (std::string(magic, magic + 4) != "PPSW") throw FormatError("weights: bad magic (expected PPSW)");
  const std::uint32_t version = in.u32_le();
  if (version != kWeightsVersion) throw FormatError("weights: unsupported version " + std::to_string(version));
  const std::uint32_t count = in.u32_le();
  ToyWeights w;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = in.u32_le();
    const unsigned char* p = in.take(len);
    std::string name(p, p + len);
    if (name.empty()) throw FormatError("weights: empty tensor name");
    Tensor t;
    const std::uint32_t rank = in.u32_le();
    if (rank > 8) throw FormatError("weights: tensor '" + name + "' has implausible rank " + std::to_string(rank));
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      t.dims.push_back(in.u32_le());
      numel *= t.dims.back();
      if (numel > in.remaining() / 4) throw FormatError("weights: truncated data in tensor '" + name + "'");
    }
    t.values.resize(numel);
    for (float& f : t.values) {
      f = in.f32_le();
      if (!std::isfinite(f)) throw FormatError("weights: non-finite value in tensor '" + name + "'");
    }
    if (!w.tensors.emplace(name, std::move(t)).second) throw FormatError("weights: duplicate tensor '" + name + "'");
  }
  if (in.remaining() != 0) throw FormatError("weights: trailing bytes after last tensor");
  return w;
}

/// Checks names and dims against the network layout for `shape`.
inline void validate_weights(const ToyWeights& w, const ToyWeights::Shape& shape = {}) {
  const auto layout = ToyWeights::layout(shape);
  for (const auto& [name, dims] : layout) {
    const Tensor& t = w.at(name);
    if (t.dims != dims) throw std::invalid_argument("weights: tensor '" + name + "' has unexpected shape");
  }
  if (w.tensors.size() != layout.size()) throw std::invalid_argument("weights: unexpected extra tensors");
}

inline ToyWeights read_weights(const std::string& path) {
  try {
    return decode_weights(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_weights(const std::string& path, const ToyWeights& w) { write_file(path, encode_weights(w)); }

}  // namespace ppsdepth::io
