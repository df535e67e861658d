#pragma once

#include <stdexcept>
#include <string>

namespace cegan {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: malformed config, manifest, arguments or shapes.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A record or dataset that cannot be used (zero votes, missing file, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training aborted at runtime (non-finite loss and similar).
class TrainingAbort : public Error {
 public:
  using Error::Error;
};

}  // namespace cegan
