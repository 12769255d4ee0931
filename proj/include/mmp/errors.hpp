/*
 * Copyright 2026 The MMP Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>

namespace mmp {

/// Root of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Extents disagree (matmul inner dims, widths, token counts).
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Input values outside their admissible range (e.g. a label >= C).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A forward operation produced NaN or infinity.
class NonFiniteError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// A caller broke a documented precondition.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the computation record (foreign or stale handles).
class GraphError : public Error {
 public:
  using Error::Error;
};

/// The finite-difference oracle could not produce a trustworthy answer.
class OracleError : public Error {
 public:
  using Error::Error;
};

class ProjectionError : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk file. `offset` is the byte position where decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmp
