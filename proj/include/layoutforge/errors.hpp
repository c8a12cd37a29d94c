#pragma once

#include <stdexcept>
#include <string>

namespace layoutforge {

/// Invalid argument to a public operation (bad range, empty input, mismatched sizes).
class ArgumentError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Input data that parses but violates a domain invariant. Carries the offending patch id.
class ValidationError : public std::runtime_error {
public:
  ValidationError(std::string patch_id, const std::string& what)
      : std::runtime_error("patch '" + patch_id + "': " + what), patch_id_(std::move(patch_id)) {}

  const std::string& patch_id() const noexcept { return patch_id_; }

private:
  std::string patch_id_;
};

/// Malformed file contents.
class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A callee broke its interface contract (e.g. a denoiser returned the wrong shape).
class ContractError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Numerical failure while fitting a model.
class FitError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace layoutforge
