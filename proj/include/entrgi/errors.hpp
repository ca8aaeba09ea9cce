// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace entrgi {

/// A caller-supplied parameter (tau, k, seed count, ...) is out of range.
class InvalidParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data (logits, corpus, token lists, ...) violates a precondition.
class InvalidInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An internal contract between modules was broken (caller bug).
class ContractViolationError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// A numeric computation produced NaN/Inf where a finite value is required.
class NumericFailureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The finite-difference oracle could not evaluate its target function.
class OracleFailureError : public std::runtime_error {
 public:
  OracleFailureError(const std::string& what, int coordinate)
      : std::runtime_error(what), coordinate_(coordinate) {}

  int coordinate() const { return coordinate_; }

 private:
  int coordinate_ = -1;
};

}  // namespace entrgi
