#pragma once

#include <stdexcept>
#include <string>

namespace fogscene {

/// Base of every error raised by the library. `exit_code()` is what the CLI
/// returns when the error escapes a subcommand.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

/// Invalid configuration value (resolution, class count, unknown key, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

/// Missing, empty or inconsistent dataset.
class DatasetError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

/// A stage was started without the artifacts of the stage it depends on.
class PipelineError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

/// Malformed, truncated or version-mismatched file.
class FormatError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 5; }
};

/// A caller violated a shape or value precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Metric requested over an empty population.
class MetricsError : public Error {
 public:
  using Error::Error;
};

}  // namespace fogscene
