// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace nilm {

/// Malformed input, violated precondition or shape mismatch.
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// A valid computation that failed while running (divergence, I/O).
class RuntimeFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string &message) {
  if (!condition)
    throw ValidationError(message);
}

} // namespace nilm
