#pragma once

#include <stdexcept>
#include <string>

namespace lisr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument or shape contract violation.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file. Carries the offending path.
class ParseError : public Error {
 public:
  ParseError(std::string path, const std::string& reason)
      : Error(path + ": " + reason), path_(std::move(path)), reason_(reason) {}

  const std::string& path() const noexcept { return path_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::string path_;
  std::string reason_;
};

}  // namespace lisr
