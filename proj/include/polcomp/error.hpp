// Copyright 2026 The polcomp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace polcomp {

enum class ErrorKind {
  invalid_argument,
  invalid_scene,     // empty optical train
  structural,        // matrix lacks retarder structure
  not_normalized,
  degenerate_state,  // zero polarized intensity
  invalid_scan,
  calibration,
  endpoint,          // error propagation evaluated at a singular point
  ambiguity,         // unwrap cannot resolve folds
  out_of_range,
  solver_failure,
  io,
};

[[nodiscard]] constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::invalid_scene: return "invalid scene";
    case ErrorKind::structural: return "structural error";
    case ErrorKind::not_normalized: return "not normalized";
    case ErrorKind::degenerate_state: return "degenerate state";
    case ErrorKind::invalid_scan: return "invalid scan";
    case ErrorKind::calibration: return "calibration error";
    case ErrorKind::endpoint: return "endpoint";
    case ErrorKind::ambiguity: return "unwrap ambiguity";
    case ErrorKind::out_of_range: return "out of range";
    case ErrorKind::solver_failure: return "solver failure";
    case ErrorKind::io: return "i/o error";
  }
  return "error";
}

/// Single exception type for the library; callers branch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace polcomp
