#ifndef CORRSTRUCT_ERROR_HPP_
#define CORRSTRUCT_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace corrstruct {

// Every failure raised by the library derives from Error; kind() is the
// stable machine-readable tag the CLI prints.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
  virtual int exit_code() const noexcept { return 1; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
  int exit_code() const noexcept override { return 2; }
};

class ArgumentError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "argument"; }
  int exit_code() const noexcept override { return 3; }
};

class IoError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "io"; }
  int exit_code() const noexcept override { return 4; }
};

class MissingFileError : public IoError {
 public:
  using IoError::IoError;
  const char* kind() const noexcept override { return "missing-file"; }
};

class MalformedHeaderError : public IoError {
 public:
  using IoError::IoError;
  const char* kind() const noexcept override { return "malformed-header"; }
};

class TruncatedError : public IoError {
 public:
  using IoError::IoError;
  const char* kind() const noexcept override { return "truncated"; }
};

class UnsupportedFormatError : public IoError {
 public:
  using IoError::IoError;
  const char* kind() const noexcept override { return "unsupported-format"; }
};

class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "format"; }
  int exit_code() const noexcept override { return 5; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation"; }
  int exit_code() const noexcept override { return 6; }
};

class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
  int exit_code() const noexcept override { return 7; }
};

}  // namespace corrstruct

#endif  // CORRSTRUCT_ERROR_HPP_
