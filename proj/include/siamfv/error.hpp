#pragma once

#include <stdexcept>
#include <string>

namespace siamfv {

// Domain failure (bad data, degenerate result). Contract violations such as
// dimension mismatches are reported with std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace siamfv
