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

// Rotating quarter-wave-plate polarimetry.
//
// A QWP at angle phi followed by a PBS transmits
//   I(phi) = 1/2 (A0 + B0 sin 2phi + C0 cos 4phi + D0 sin 4phi)
// with A0 = S0 + S1/2, B0 = -S3, C0 = S1/2, D0 = S2/2. The coefficients are
// recovered from a sampled revolution by discrete Fourier sums taken over the
// background-subtracted detector voltages and offset-corrected angles.

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "polcomp/error.hpp"
#include "polcomp/noise.hpp"
#include "polcomp/stokes.hpp"

namespace polcomp {

struct ScanSample {
  double angle_measured = 0.0;    // radians, raw mount reading
  double detector_voltage = 0.0;  // volts, raw detector reading
};

struct PolarimeterScan {
  std::vector<ScanSample> samples;
  double background_voltage = 0.0;  // volts
  double offset_alpha = 0.0;        // radians, QWP fast axis relative to mount zero

  static constexpr std::size_t min_samples = 16;

  /// Throws invalid_scan unless the scan holds >= 16 finite samples with
  /// strictly increasing angles covering a revolution: span >= 2pi - one step,
  /// with half a step of slack for mount reading jitter.
  void validate() const {
    const std::size_t n = samples.size();
    if (n < min_samples)
      throw Error(ErrorKind::invalid_scan, "scan needs at least 16 samples, got " + std::to_string(n));
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(samples[i].angle_measured) || !std::isfinite(samples[i].detector_voltage))
        throw Error(ErrorKind::invalid_scan, "non-finite sample at index " + std::to_string(i));
      if (i > 0 && !(samples[i].angle_measured > samples[i - 1].angle_measured))
        throw Error(ErrorKind::invalid_scan,
                    "angles must be strictly increasing (index " + std::to_string(i) + ")");
    }
    const double span = samples.back().angle_measured - samples.front().angle_measured;
    const double step = span / static_cast<double>(n - 1);
    if (span + 1.5 * step < two_pi)
      throw Error(ErrorKind::invalid_scan, "scan does not cover a full revolution");
  }
};

struct FourierCoefficients {
  double a0 = 0.0;
  double b0 = 0.0;
  double c0 = 0.0;
  double d0 = 0.0;
};

/// Intensity behind QWP(phi) and PBS.
[[nodiscard]] inline double ideal_intensity(const StokesVector& s, double phi) noexcept {
  const double c = std::cos(2.0 * phi);
  const double sn = std::sin(2.0 * phi);
  return 0.5 * (s.s0 + s.s1 * c * c + s.s2 * sn * c - s.s3 * sn);
}

/// Samples at phi_n = n * step, n = 0..n_samples-1, read through the noise
/// model: voltage = gain * I + background + N(0, pd_sigma), angle = phi + alpha
/// + per-scan homing error + per-sample jitter.
[[nodiscard]] inline PolarimeterScan simulate_scan(const StokesVector& s_in, std::size_t n_samples,
                                                   double step, double alpha,
                                                   const NoiseModel& noise, std::uint64_t seed) {
  noise.validate();
  if (!(step > 0.0) || static_cast<double>(n_samples) * step < two_pi * (1.0 - 1e-9))
    throw Error(ErrorKind::invalid_scan, "n_samples * step must cover 2pi");

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double homing = noise.homing_sigma > 0 ? noise.homing_sigma * gauss(rng) : 0.0;

  PolarimeterScan scan;
  scan.background_voltage = noise.background_v;
  scan.offset_alpha = alpha;
  scan.samples.reserve(n_samples);
  for (std::size_t n = 0; n < n_samples; ++n) {
    const double phi = static_cast<double>(n) * step;
    const double jitter = noise.angle_jitter_sigma > 0 ? noise.angle_jitter_sigma * gauss(rng) : 0.0;
    const double pd = noise.pd_sigma > 0 ? noise.pd_sigma * gauss(rng) : 0.0;
    scan.samples.push_back({phi + alpha + homing + jitter,
                            noise.detector_gain * ideal_intensity(s_in, phi) + noise.background_v + pd});
  }
  return scan;
}

/// Background-subtracted, offset-corrected discrete Fourier sums.
[[nodiscard]] inline FourierCoefficients extract_coefficients(const PolarimeterScan& scan) {
  scan.validate();
  const double n = static_cast<double>(scan.samples.size());
  FourierCoefficients f;
  for (const auto& sample : scan.samples) {
    const double v = sample.detector_voltage - scan.background_voltage;
    const double phi = sample.angle_measured - scan.offset_alpha;
    f.a0 += v;
    f.b0 += v * std::sin(2.0 * phi);
    f.c0 += v * std::cos(4.0 * phi);
    f.d0 += v * std::sin(4.0 * phi);
  }
  f.a0 *= 2.0 / n;
  f.b0 *= 4.0 / n;
  f.c0 *= 4.0 / n;
  f.d0 *= 4.0 / n;
  return f;
}

[[nodiscard]] constexpr StokesVector stokes_from_coefficients(const FourierCoefficients& c) noexcept {
  return {c.a0 - c.c0, 2.0 * c.c0, 2.0 * c.d0, -c.b0};
}

struct TomographyResult {
  FourierCoefficients fourier;
  StokesVector stokes;  // in detector-voltage units
  NormalizedStokes normalized;
  double dop = 0.0;  // reported only; never used to reject a scan
};

/// Full tomography record of a scan. The detector gain cancels in `normalized`.
[[nodiscard]] inline TomographyResult analyze_scan(const PolarimeterScan& scan) {
  TomographyResult r;
  r.fourier = extract_coefficients(scan);
  r.stokes = stokes_from_coefficients(r.fourier);
  const double p = r.stokes.polarized_norm();
  if (!(p >= 1e-12 * std::abs(r.fourier.a0)) || !(p > 0.0))
    throw Error(ErrorKind::degenerate_state, "scan has no measurable polarized component");
  r.normalized = normalize(r.stokes);
  r.dop = r.stokes.s0 > 0.0 ? p / r.stokes.s0 : 0.0;
  return r;
}

[[nodiscard]] inline NormalizedStokes measure_stokes(const PolarimeterScan& scan) {
  return analyze_scan(scan).normalized;
}

/// Rotation parameters of the laboratory polarimeter: one revolution in 310 steps.
struct ScanGeometry {
  std::size_t n_samples = 310;
  double step = two_pi / 310.0;  // ~1.16 degrees
  double alpha = 0.0;
  double scan_time_s = 30.0;  // modeled wall time of one revolution
};

}  // namespace polcomp
