/* Copyright 2026 The paramaug Authors. All Rights Reserved.
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

#include <cstddef>
#include <stdexcept>
#include <string>

namespace paramaug {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes disagree. `axis` is the offending axis, or -1 when the
// mismatch is in rank or otherwise not attributable to one axis.
class ShapeError : public Error {
 public:
  ShapeError(const std::string& what, int axis = -1)
      : Error(what), axis_(axis) {}
  int axis() const { return axis_; }

 private:
  int axis_;
};

// Convolution output extent would be < 1.
class GeometryError : public Error {
 public:
  using Error::Error;
};

// Caller violated a precondition (non-scalar loss, bad argument ordering...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Object used in a state that does not support the operation.
class StateError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, std::size_t index)
      : Error(what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

// Descriptor or config document failed validation. `field` is a JSON
// pointer-ish path to the offending entry.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what),
        field_(field),
        message_(what) {}
  const std::string& field() const { return field_; }
  /// The diagnostic without the field prefix.
  const std::string& message() const { return message_; }

 private:
  std::string field_;
  std::string message_;
};

}  // namespace paramaug
