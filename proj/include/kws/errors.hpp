#pragma once

#include <stdexcept>
#include <string>

namespace kws {

/// Error categories. The CLI maps these onto its exit codes.
enum class ErrorKind {
  kValidation,    // bad arguments, configuration or data contracts
  kPrecondition,  // caller violated an operation's precondition
  kUnsupported,   // well-formed input we do not handle
  kIo,
  kFormat,        // malformed or incompatible file contents
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::kValidation, what) {}
};

class PreconditionError : public Error {
 public:
  explicit PreconditionError(const std::string& what)
      : Error(ErrorKind::kPrecondition, what) {}
};

class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& what)
      : Error(ErrorKind::kUnsupported, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what)
      : Error(ErrorKind::kFormat, what) {}
};

/// Raised by nn::load when the model file carries an unknown version tag.
class VersionError : public FormatError {
 public:
  explicit VersionError(const std::string& what) : FormatError(what) {}
};

#define KWS_REQUIRE(cond, msg)                  \
  do {                                          \
    if (!(cond)) throw ::kws::PreconditionError(msg); \
  } while (0)

}  // namespace kws
