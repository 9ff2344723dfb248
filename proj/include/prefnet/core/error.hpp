// Copyright 2026 The prefnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace prefnet {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand extents are incompatible with the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A user-supplied value violates a documented precondition. The CLI maps
/// these to exit code 1.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A file could not be decoded (bad magic, truncated payload, bad header).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace prefnet
