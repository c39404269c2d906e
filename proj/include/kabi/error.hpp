#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace kabi {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed inputs: wrong dimensions, invalid settings, bad config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite values produced by a numerical kernel.
class NumericError : public Error {
 public:
  using Error::Error;
};

class IntegrationDiverged : public NumericError {
 public:
  IntegrationDiverged(std::size_t step, const std::string& what)
      : NumericError("integration diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// A required upstream artifact is missing or incompatible.
class DependencyError : public Error {
 public:
  using Error::Error;
};

}  // namespace kabi
