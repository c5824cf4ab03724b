#pragma once

#include <stdexcept>
#include <string>

namespace spoiler {

// Bad or inconsistent input data (malformed files, single-class labels,
// too few groups to split). Maps to CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad config, mismatched shapes).
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace spoiler
