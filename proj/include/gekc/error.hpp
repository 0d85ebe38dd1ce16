#pragma once

#include <stdexcept>
#include <string>

namespace gekc {

// Error taxonomy mirrored by the CLI exit codes:
//   ArgumentError -> 2 (usage), DataError -> 3, NumericError -> 4.

struct ArgumentError : std::runtime_error {
  explicit ArgumentError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gekc
