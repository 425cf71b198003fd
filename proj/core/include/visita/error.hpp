#pragma once

#include <stdexcept>
#include <string>

namespace visita {

enum class ErrorKind {
  shape,
  invalid_input,
  invariant,
  convergence,
  format,
  unsupported_format,
  config,
  undefined_metric,
  io,
};

/// Base class for every error raised by the library. `kind()` lets callers
/// (the CLI in particular) map failures onto exit codes without RTTI chains.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(ErrorKind::shape, "shape error: " + what) {}
};

class InvalidInputError : public Error {
 public:
  explicit InvalidInputError(const std::string& what)
      : Error(ErrorKind::invalid_input, "invalid input: " + what) {}
};

class InvariantError : public Error {
 public:
  explicit InvariantError(const std::string& what)
      : Error(ErrorKind::invariant, "invariant violated: " + what) {}
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_violation)
      : Error(ErrorKind::convergence, "convergence error: " + what), last_violation_(last_violation) {}
  double last_violation() const noexcept { return last_violation_; }

 private:
  double last_violation_;
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& what) : Error(ErrorKind::format, "format error: " + what) {}
};

class UnsupportedFormatError : public Error {
 public:
  explicit UnsupportedFormatError(const std::string& what)
      : Error(ErrorKind::unsupported_format, "unsupported format: " + what) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::config, "config error: " + what) {}
};

class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(const std::string& what)
      : Error(ErrorKind::undefined_metric, "undefined metric: " + what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, "io error: " + what) {}
};

/// Rethrows the in-flight exception with `context` prepended, keeping its
/// kind. Non-library exceptions are rethrown unchanged.
[[noreturn]] inline void rethrow_with_context(const std::string& context) {
  try {
    throw;
  } catch (const Error& e) {
    throw Error(e.kind(), context + ": " + e.what());
  }
}

}  // namespace visita
