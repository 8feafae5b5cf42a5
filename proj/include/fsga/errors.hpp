#pragma once

#include <stdexcept>
#include <string>

namespace fsga {

// Invalid user input / precondition violations map to std::invalid_argument.
// The types below cover the remaining failure classes the toolkit reports.

// Non-finite values, degenerate numerics (zero-norm activations, non-PSD
// covariances, diverged training).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// Config file problems; `field` is the dotted path of the offending entry.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error(field + ": " + what), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

// File-level failures: missing paths, short reads, checksum or version
// mismatches in checkpoint bundles.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace fsga
