#pragma once

#include <stdexcept>
#include <string>

namespace ppsdepth {

/// Raised when a correlation or alignment has no signal to work with
/// (zero variance, singular normal equations, too few valid pixels).
class DegenerateError : public std::domain_error {
 public:
  explicit DegenerateError(const std::string& what) : std::domain_error(what) {}
};

/// Malformed or unreadable file content.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ppsdepth
