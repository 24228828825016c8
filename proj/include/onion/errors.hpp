#pragma once

#include <stdexcept>
#include <string>

namespace onion {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad arguments or violated preconditions supplied by the caller.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (files, configs, datasets).
class DataError : public Error {
 public:
  using Error::Error;
};

// A remote scorer answered with something other than a well-formed reply.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

}  // namespace onion
