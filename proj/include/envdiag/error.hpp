#pragma once

#include <stdexcept>
#include <string>

namespace envdiag {

// Invalid argument or configuration supplied by the caller.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// The analysis itself could not be completed (no valid peak, degenerate sample, ...).
class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File missing, unreadable or malformed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ParameterError(what);
}

}  // namespace detail

}  // namespace envdiag
