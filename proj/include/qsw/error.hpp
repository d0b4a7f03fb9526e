#pragma once

#include <stdexcept>
#include <string>

namespace qsw {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument or violated precondition.
class DomainError : public Error {
  public:
    using Error::Error;
};

/// An iterative routine failed to reach its tolerance.
class ConvergenceError : public Error {
  public:
    ConvergenceError(const std::string& what, double last_iterate)
        : Error(what), last_iterate_(last_iterate) {}

    double last_iterate() const noexcept { return last_iterate_; }

  private:
    double last_iterate_;
};

/// The three-moment fit has no valid (c, p, r). Callers record a missing value.
class M3Breakdown : public Error {
  public:
    using Error::Error;
};

}  // namespace qsw
