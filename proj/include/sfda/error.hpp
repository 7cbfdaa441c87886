/* Copyright 2026 The sfda Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <stdexcept>
#include <string>

namespace sfda {

// Root of every error raised by the library. The CLI maps the subclasses
// onto exit codes: usage/config/contract -> 2, everything else -> 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated a documented precondition (shapes, lengths, empty input).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// A referenced file is missing or unreadable / unwritable.
class IoError : public Error {
 public:
  using Error::Error;
};

// A file parsed but its contents are invalid (non-finite values, bad rows).
class DataError : public Error {
 public:
  DataError(const std::string& what, long row = -1, long col = -1)
      : Error(what), row_(row), col_(col) {}
  long row() const { return row_; }
  long col() const { return col_; }

 private:
  long row_;
  long col_;
};

// Incompatible shapes between artifacts (ROI count, checkpoint schema).
class SchemaError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Input series is too short for the requested windowing.
class SeriesTooShortError : public ContractError {
 public:
  SeriesTooShortError(const std::string& what, long length, long window)
      : ContractError(what), length_(length), window_(window) {}
  long length() const { return length_; }
  long window() const { return window_; }

 private:
  long length_;
  long window_;
};

}  // namespace sfda
