#pragma once

#include <stdexcept>
#include <string>

namespace savanna {

/// Base exception for every recoverable failure raised by the library.
/// `kind()` is a short machine-readable tag the CLI forwards in its error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

}  // namespace savanna
