// Copyright (c) 2026, The CLUE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace clue {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shape or index contract violated by the caller.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed or insufficient input data (log lines, files, corpora).
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values or diverged optimization.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad configuration keys or values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace clue
