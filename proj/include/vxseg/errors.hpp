#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace vxseg {

// Base of every error thrown by the library. The C API maps each subclass to
// a distinct status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (shape, range, configuration).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced or consumed by a numeric routine.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (bad magic, version, truncated payload).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Filesystem failure (cannot open, cannot write).
class IoError : public Error {
 public:
  using Error::Error;
};

// A metric is not defined for the given inputs (e.g. ASD of an empty mask).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

namespace detail {
template <typename... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << args);
  return os.str();
}
}  // namespace detail

}  // namespace vxseg

#define VXSEG_REQUIRE(cond, ...)                                            \
  do {                                                                      \
    if (!(cond)) {                                                          \
      throw ::vxseg::ContractViolation(::vxseg::detail::concat(__VA_ARGS__)); \
    }                                                                       \
  } while (0)
