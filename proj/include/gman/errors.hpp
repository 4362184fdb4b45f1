#pragma once

#include <stdexcept>
#include <string>

namespace gman {

// Every library failure derives from Error so the CLI can map it to an exit
// code with a single catch site.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Bad shapes, bad partitions, malformed arguments.
class ValidationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "validation"; }
};

/// Malformed dataset, partition, config or checkpoint files.
class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "format"; }
};

/// A NaN or infinity showed up where only finite values are allowed.
class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
};

/// Attribution was requested at a granularity the subset does not support.
class EligibilityError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "eligibility"; }
};

/// A metric is undefined for the given input (e.g. AUROC with one class).
class MetricError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "metric"; }
};

}  // namespace gman
