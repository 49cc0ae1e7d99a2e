/*
 * Copyright 2026 The ecunlearn Authors
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

#ifndef ECU_ERROR_HPP
#define ECU_ERROR_HPP

#include <stdexcept>
#include <string>

namespace ecu {

/// Shapes of operands do not conform.
class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A NaN or Inf was produced. The message names the producing operation.
class NumericError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A caller-side contract was violated (bad label, empty split, ...).
class PreconditionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A persisted file is corrupt, truncated or of an unsupported version.
class FormatError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Invalid experiment configuration. `path()` points into the config.
class ConfigError : public std::runtime_error {
  public:
    ConfigError(std::string path, const std::string& what)
        : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}

    const std::string& path() const noexcept { return path_; }

  private:
    std::string path_;
};

}  // namespace ecu

#endif  // ECU_ERROR_HPP
