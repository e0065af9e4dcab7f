#pragma once

#include <stdexcept>
#include <string>

namespace fedsig {

// Base for every error raised by the library. `kind()` is a stable
// machine-readable tag used by the CLI error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

// Incompatible shapes or lengths between tensors, configs and caches.
class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& message)
      : Error("structural", message) {}
};

// Malformed signature files or corpus directories.
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& message) : Error("parse", message) {}
};

// Invalid configuration values (even kernel, K > users, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error("config", message) {}
};

// Preconditions on data: empty corpora, insufficient samples, overflow.
class DataError : public Error {
 public:
  explicit DataError(const std::string& message) : Error("data", message) {}
};

}  // namespace fedsig
