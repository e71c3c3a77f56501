#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace eepo {

using Token = std::int32_t;
using TokenSeq = std::vector<Token>;

/// Reserved end-of-sequence id. Every policy and task shares it.
inline constexpr Token kEos = 0;

/// Raised when a brute-force oracle would exceed its enumeration budget.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for unreadable or unwritable artifacts.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace eepo
