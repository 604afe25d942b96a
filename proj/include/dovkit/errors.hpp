// Copyright 2026 The dovkit Authors
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

#pragma once

#include <stdexcept>
#include <string>

namespace dovkit {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller violated a documented precondition (bad rate, bad range, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ShapeMismatchError : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated artifact file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Training or perturbation search produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Experiment configuration rejected before any work starts.
class ValidationError : public Error {
 public:
  using Error::Error;
};

}  // namespace dovkit
