#pragma once

#include <stdexcept>
#include <string>

namespace pbrs {

/// Base for every error caused by bad user input (configs, files, arguments).
/// The CLI maps these to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class DataError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class InsufficientDataError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ContractError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Simulation blew up or was fed a non-finite state.
class IntegrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pbrs
