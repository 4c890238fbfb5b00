#pragma once

#include <stdexcept>

namespace adlm {

// Bad or unknown configuration keys/values, malformed CLI usage.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or wrong-version artifact file.
class format_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vocabulary/checkpoint disagreement.
class mismatch_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adlm
