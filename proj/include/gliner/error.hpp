#pragma once

#include <stdexcept>
#include <string>

namespace gliner {

// Every error names the module that raised it; what() reads "module: message".
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(module + ": " + message), module_(std::move(module)), message_(message) {}

  const std::string& module() const noexcept { return module_; }
  // The message without the module prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string module_;
  std::string message_;
};

// Shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid or unsatisfiable configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Input exceeds a configured size limit.
class SizingError : public Error {
 public:
  using Error::Error;
};

// Malformed file contents.
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace gliner
