#pragma once

#include <stdexcept>
#include <string>

namespace ilpc {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or configuration (violated precondition).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// File could not be read, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ilpc
