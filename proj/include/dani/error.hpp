#pragma once

#include <stdexcept>
#include <string>

namespace dani {

// Bad command line / config keys. Exit code 1 at the CLI boundary.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& m) : std::runtime_error(m) {}
};

// Rejected or malformed data (file formats, preconditions). Exit code 2.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& m) : std::runtime_error(m) {}
};

}  // namespace dani
