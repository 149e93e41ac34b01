// Copyright 2026 The xdial Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace xdial {

// Base for every error the library raises on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// A numeric precondition failed (fully masked softmax row, non-finite value).
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration or argument. CLI exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// An expert routing request cannot be honoured for the given inputs.
class RoutingError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Malformed or missing input data. CLI exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

// Embedding provider failed after retries. CLI exit code 4.
class ProviderError : public Error {
 public:
  using Error::Error;
};

}  // namespace xdial
