#pragma once

#include <stdexcept>
#include <string>

namespace hmtl {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument does not hold (bad index, wrong length,
/// non-finite angle, ...).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Structurally valid input that breaks a domain rule, e.g. more than two
/// rotated tiles in a puzzle-rotation sample.
class ConstraintViolation : public Error {
 public:
  using Error::Error;
};

/// A configuration document or model configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file or directory that must exist is missing or unreadable.
class LoadError : public Error {
 public:
  explicit LoadError(const std::string& path, const std::string& what)
      : Error(path + ": " + what), path_(path) {}

  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

/// A checkpoint does not match the structure of the model it is loaded into.
class CheckpointIncompatible : public Error {
 public:
  using Error::Error;
};

/// Batch statistics cannot be computed (batch too small, constant feature).
class DegenerateBatch : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class Divergence : public Error {
 public:
  using Error::Error;
};

namespace detail {

[[noreturn]] inline void throw_invalid(const std::string& what) { throw InvalidInput(what); }

}  // namespace detail

}  // namespace hmtl
