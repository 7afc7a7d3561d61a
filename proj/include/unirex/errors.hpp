#pragma once
//------------------------------------------------------------------------------
//
//   Copyright 2026 The Unirex Authors
//
//   Licensed under the Apache License, Version 2.0 (the "License");
//   you may not use this file except in compliance with the License.
//   You may obtain a copy of the License at
//
//       http://www.apache.org/licenses/LICENSE-2.0
//
//   Unless required by applicable law or agreed to in writing, software
//   distributed under the License is distributed on an "AS IS" BASIS,
//   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
//   See the License for the specific language governing permissions and
//   limitations under the License.
//
//------------------------------------------------------------------------------

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace unirex {

using TokenId = std::int32_t;

/// Base class of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// A corpus, config or checkpoint file could not be parsed.
class ParseError : public Error
{
public:
  ParseError(std::string const &message, std::size_t line)
    : Error("line " + std::to_string(line) + ": " + message)
    , line_(line)
  {}

  explicit ParseError(std::string const &message)
    : Error(message)
  {}

  std::size_t line() const noexcept
  {
    return line_;
  }

private:
  std::size_t line_ = 0;
};

/// A value violates a documented invariant or precondition.
class ValidationError : public Error
{
public:
  using Error::Error;
};

/// Training hit a non-finite loss or an impossible batching request.
class TrainingError : public Error
{
public:
  using Error::Error;
};

}  // namespace unirex
