/*
 * Copyright (c) 2026, The a3s authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace a3s {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument, configuration or precondition violation.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Raised when an oracle answer conflicts with the closed constraint set.
class ContradictionError : public Error {
 public:
  ContradictionError(const std::string& what, std::uint32_t s, std::uint32_t t)
      : Error(what), s_(s), t_(t) {}

  std::uint32_t first() const noexcept { return s_; }
  std::uint32_t second() const noexcept { return t_; }

 private:
  std::uint32_t s_;
  std::uint32_t t_;
};

/// File system or parse failure; the message carries the failing path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// The oracle can no longer be reached (interactive session closed).
class OracleUnavailable : public Error {
 public:
  using Error::Error;
};

}  // namespace a3s
