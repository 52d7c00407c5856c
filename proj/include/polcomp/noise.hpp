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

#include <cstdint>
#include <random>
#include <string_view>

#include "polcomp/error.hpp"
#include "polcomp/stokes.hpp"

namespace polcomp {

/// Imperfections of the simulated apparatus. All fields are >= 0.
struct NoiseModel {
  double pd_sigma = 0.0;                // volts, Gaussian detector noise per sample
  double background_v = 0.0;            // volts, detector dark level
  double angle_jitter_sigma = 0.0;      // radians, per-sample mount reading jitter
  double homing_sigma = 0.0;            // radians, per-scan error of the calibrated QWP offset
  double voltage_quantum_v = 0.0;       // volts, LCVR drive granularity (0 = continuous)
  double retardance_curve_error = 0.0;  // radians, amplitude of the systematic curve bias
  double detector_gain = 1.0;           // volts per unit intensity

  [[nodiscard]] static NoiseModel none() noexcept { return {}; }

  /// Desk-scale stand-in for the laboratory noise budget, full scale = 1 V.
  [[nodiscard]] static NoiseModel lab() noexcept {
    NoiseModel n;
    n.pd_sigma = 0.005;
    n.background_v = 0.01;
    n.angle_jitter_sigma = deg_to_rad(0.05);
    n.homing_sigma = deg_to_rad(2.0);
    n.voltage_quantum_v = 0.01;
    n.retardance_curve_error = 0.01;
    return n;
  }

  [[nodiscard]] static NoiseModel preset(std::string_view name) {
    if (name == "none") return none();
    if (name == "lab") return lab();
    throw Error(ErrorKind::invalid_argument, "unknown noise preset '" + std::string(name) + "'");
  }

  void validate() const {
    if (pd_sigma < 0 || background_v < 0 || angle_jitter_sigma < 0 || homing_sigma < 0 ||
        voltage_quantum_v < 0 || retardance_curve_error < 0 || !(detector_gain > 0))
      throw Error(ErrorKind::invalid_argument, "noise model fields must be non-negative");
  }
};

/// SplitMix64 finalizer; derives independent stream seeds from (seed, index).
[[nodiscard]] constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

}  // namespace polcomp
