#pragma once

#include <cctype>
#include <cmath>
#include <sstream>
#include <string>

#include "ppsdepth/grid.hpp"
#include "ppsdepth/io/binary.hpp"

namespace ppsdepth::io {

/// Single-channel PFM ("Pf"). Header: "Pf\n<width> <height>\n<scale>\n"; a
/// negative scale marks little-endian samples. Rows are stored bottom row
/// first, as in the reference format. Values are 32-bit floats, so a grid
/// round-trips exactly when its values are representable as float.
inline Bytes encode_pfm(const ScalarMap& grid) {
  std::ostringstream header;
  header << "Pf\n" << grid.width() << ' ' << grid.height() << "\n-1.0\n";
  const std::string h = header.str();
  Bytes out(h.begin(), h.end());
  out.reserve(out.size() + grid.size() * 4);
  for (std::size_t r = grid.height(); r-- > 0;)
    for (std::size_t c = 0; c < grid.width(); ++c) append_f32_le(out, static_cast<float>(grid(r, c)));
  return out;
}

namespace detail {

inline std::string next_token(std::span<const unsigned char> data, std::size_t& pos) {
  while (pos < data.size() && std::isspace(data[pos])) ++pos;
  std::string tok;
  while (pos < data.size() && !std::isspace(data[pos])) tok.push_back(static_cast<char>(data[pos++]));
  if (tok.empty()) throw FormatError("pfm: truncated header");
  return tok;
}

}  // namespace detail

/// Throws FormatError on a malformed header, truncated payload or NaN sample.
inline ScalarMap decode_pfm(std::span<const unsigned char> data) {
  std::size_t pos = 0;
  const std::string magic = detail::next_token(data, pos);
  if (magic == "PF") throw FormatError("pfm: three-channel PFM is not supported for scalar maps");
  if (magic != "Pf") throw FormatError("pfm: bad magic '" + magic + "' (expected Pf)");
  long long w = 0, h = 0;
  double scale = 0.0;
  try {
    std::size_t used = 0;
    const std::string ws = detail::next_token(data, pos);
    w = std::stoll(ws, &used);
    if (used != ws.size()) throw FormatError("pfm: bad width");
    const std::string hs = detail::next_token(data, pos);
    h = std::stoll(hs, &used);
    if (used != hs.size()) throw FormatError("pfm: bad height");
    const std::string ss = detail::next_token(data, pos);
    scale = std::stod(ss, &used);
    if (used != ss.size()) throw FormatError("pfm: bad scale");
  } catch (const std::logic_error&) {
    throw FormatError("pfm: malformed header");
  }
  if (w <= 0 || h <= 0) throw FormatError("pfm: non-positive dimensions");
  if (scale == 0.0 || !std::isfinite(scale)) throw FormatError("pfm: scale field must be non-zero and finite");
  if (pos >= data.size() || !std::isspace(data[pos])) throw FormatError("pfm: missing separator after header");
  ++pos;
  const bool little = scale < 0.0;
  const std::size_t width = static_cast<std::size_t>(w);
  const std::size_t height = static_cast<std::size_t>(h);
  if ((data.size() - pos) / 4 / width < height || data.size() - pos < width * height * 4)
    throw FormatError("pfm: truncated payload");
  ScalarMap grid(height, width);
  const unsigned char* p = data.data() + pos;
  for (std::size_t r = height; r-- > 0;) {
    for (std::size_t c = 0; c < width; ++c, p += 4) {
      const float f = load_f32(p, little);
      if (std::isnan(f)) {
        std::ostringstream msg;
        msg << "pfm: NaN at pixel (u=" << c << ", v=" << r << ")";
        throw FormatError(msg.str());
      }
      grid(r, c) = f;
    }
  }
  return grid;
}

inline ScalarMap read_pfm(const std::string& path) {
  try {
    return decode_pfm(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_pfm(const std::string& path, const ScalarMap& grid) { write_file(path, encode_pfm(grid)); }

}  // namespace ppsdepth::io
