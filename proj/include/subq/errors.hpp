// Copyright 2026 The subq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SUBQ_ERRORS_HPP_
#define SUBQ_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace subq {

// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSubsetError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class InvalidParameterError : public Error {
 public:
  using Error::Error;
};

// A computation would exceed its configured size budget.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class PolicyError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// Model validation failure. `check()` names the violated check so that callers
// (and the verify command) can report it.
class ValidationError : public Error {
 public:
  ValidationError(std::string check, const std::string& detail)
      : Error(check + ": " + detail), check_(std::move(check)) {}

  const std::string& check() const noexcept { return check_; }

 private:
  std::string check_;
};

}  // namespace subq

#endif  // SUBQ_ERRORS_HPP_
