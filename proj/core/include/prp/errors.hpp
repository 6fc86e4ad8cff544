#pragma once

#include <stdexcept>
#include <string>

namespace prp {

/// Base for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument or out-of-range request.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A source that exists but yields nothing usable (e.g. a directory with no frames).
class EmptySourceError : public InputError {
 public:
  using InputError::InputError;
};

/// Invalid or inconsistent configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The dataset cannot satisfy a request (too short, empty, ...).
class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace prp
