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

// Liquid-crystal variable retarder characterization.
//
// The LCVR sits at 45 degrees between crossed analyzers, so the detector sees
// I = I_max (1 - cos delta) / 2. Inverting that gives the retardance folded into
// [0, pi]; unwrapping the folds recovers the monotone retardance-voltage curve.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "polcomp/error.hpp"
#include "polcomp/stokes.hpp"

namespace polcomp {

struct SweepPoint {
  double drive_voltage_rms = 0.0;  // volts
  double mean_pd_voltage = 0.0;    // volts
  double pd_voltage_sem = 0.0;     // volts
};

struct CharacterizationSweep {
  std::vector<SweepPoint> points;
  double background_voltage = 0.0;
  double background_sem = 0.0;

  static constexpr std::size_t min_points = 10;

  void validate() const {
    if (points.size() < min_points)
      throw Error(ErrorKind::invalid_argument,
                  "sweep needs at least 10 points, got " + std::to_string(points.size()));
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto& p = points[i];
      if (!std::isfinite(p.drive_voltage_rms) || !std::isfinite(p.mean_pd_voltage) ||
          !std::isfinite(p.pd_voltage_sem) || p.pd_voltage_sem < 0)
        throw Error(ErrorKind::invalid_argument, "bad sweep point at index " + std::to_string(i));
      if (i > 0 && !(p.drive_voltage_rms > points[i - 1].drive_voltage_rms))
        throw Error(ErrorKind::invalid_argument,
                    "drive voltages must be strictly increasing (index " + std::to_string(i) + ")");
    }
    if (!std::isfinite(background_voltage) || !(background_sem >= 0))
      throw Error(ErrorKind::invalid_argument, "bad background record");
  }
};

struct CurvePoint {
  double drive_voltage_rms = 0.0;           // volts
  double retardance = 0.0;                  // radians
  std::optional<double> retardance_error;   // radians; empty where the propagation is singular
  bool clamped = false;                     // arccos argument was clamped to [-1, 1]
};

struct RetardanceCurve {
  std::vector<CurvePoint> points;
  double wavelength_nm = 808.0;
  double voltage_step_v = 0.01;  // drive granularity; the fine tuner's minimum step
  int fold_count = 0;

  void validate() const {
    if (points.size() < 2) throw Error(ErrorKind::invalid_argument, "curve needs at least two points");
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (!std::isfinite(points[i].drive_voltage_rms) || !std::isfinite(points[i].retardance))
        throw Error(ErrorKind::invalid_argument, "non-finite curve point at index " + std::to_string(i));
      if (i > 0 && !(points[i].drive_voltage_rms > points[i - 1].drive_voltage_rms))
        throw Error(ErrorKind::invalid_argument, "curve voltages must be strictly increasing");
    }
  }

  [[nodiscard]] double min_voltage() const { return points.front().drive_voltage_rms; }
  [[nodiscard]] double max_voltage() const { return points.back().drive_voltage_rms; }

  [[nodiscard]] double min_retardance() const {
    return std::min_element(points.begin(), points.end(), by_retardance)->retardance;
  }
  [[nodiscard]] double max_retardance() const {
    return std::max_element(points.begin(), points.end(), by_retardance)->retardance;
  }
  [[nodiscard]] double span() const { return max_retardance() - min_retardance(); }

 private:
  static bool by_retardance(const CurvePoint& a, const CurvePoint& b) { return a.retardance < b.retardance; }
};

// ---------------------------------------------------------------------------
// Intensity -> retardance

struct RetardanceSample {
  double retardance = 0.0;  // in [0, pi]
  bool clamped = false;
};

[[nodiscard]] inline RetardanceSample retardance_sample(double v_meas, double v_back, double v_max) {
  if (!(v_max > v_back))
    throw Error(ErrorKind::calibration, "maximum intensity must exceed the background");
  const double arg = 1.0 - 2.0 * (v_meas - v_back) / (v_max - v_back);
  const double clamped_arg = std::clamp(arg, -1.0, 1.0);
  return {std::acos(clamped_arg), clamped_arg != arg};
}

[[nodiscard]] inline double retardance_from_intensity(double v_meas, double v_back, double v_max) {
  return retardance_sample(v_meas, v_back, v_max).retardance;
}

/// Gaussian propagation of the detector and background standard errors.
/// Both terms carry the full d(delta)/dV_meas weight; the exact background
/// derivative is smaller by (V_max - V_meas)/(V_max - V_back), so this bounds it.
[[nodiscard]] inline double retardance_error(double v_meas, double v_back, double v_max, double sem_meas,
                                             double sem_back) {
  if (!(v_meas > v_back) || !(v_meas < v_max))
    throw Error(ErrorKind::endpoint, "error propagation is singular at the ends of the intensity range");
  return std::sqrt((sem_meas * sem_meas + sem_back * sem_back) / ((v_meas - v_back) * (v_max - v_meas)));
}

// ---------------------------------------------------------------------------
// Unwrapping

struct UnwrapResult {
  std::vector<double> values;
  int fold_count = 0;
};

namespace detail {

enum class Zone { none, low, high };

struct Run {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  Zone zone = Zone::none;
};

struct Branch {
  int k = 0;       // multiple of 2pi
  double s = 1.0;  // +1 or -1
  [[nodiscard]] double value(double raw) const noexcept { return two_pi * k + s * raw; }
};

inline std::vector<Run> zone_runs(std::span<const double> raw, double threshold) {
  auto classify = [&](double r) {
    if (r > pi - threshold) return Zone::high;
    if (r < threshold) return Zone::low;
    return Zone::none;
  };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Zone z = classify(raw[i]);
    if (runs.empty() || runs.back().zone != z)
      runs.push_back({i, i + 1, z});
    else
      runs.back().end = i + 1;
  }

  // Noise near an extremum can split one zone in two; the short excursion in
  // between never leaves the neighbourhood of that extremum.
  for (std::size_t r = 0; r + 2 < runs.size();) {
    const Run& a = runs[r];
    const Run& gap = runs[r + 1];
    const Run& b = runs[r + 2];
    if (a.zone != Zone::none && gap.zone == Zone::none && b.zone == a.zone) {
      double excursion = 0.0;
      for (std::size_t i = gap.begin; i < gap.end; ++i)
        excursion = std::max(excursion, a.zone == Zone::high ? pi - raw[i] : raw[i]);
      if (excursion < 2.0 * threshold) {
        runs[r].end = b.end;
        runs.erase(runs.begin() + static_cast<std::ptrdiff_t>(r) + 1, runs.begin() + static_cast<std::ptrdiff_t>(r) + 3);
        continue;
      }
    }
    ++r;
  }
  return runs;
}

}  // namespace detail

/// Unwraps arccos-folded retardances. The first point fixes the global branch
/// (its value is returned unchanged). A fold is a zone within `fold_threshold`
/// of 0 or pi across which the raw slope changes sign; at such a zone the
/// branch reflects. Every output is congruent to +-raw modulo 2pi.
[[nodiscard]] inline UnwrapResult unwrap_retardance(std::span<const double> raw,
                                                    double fold_threshold = 0.15) {
  using detail::Branch;
  using detail::Run;
  using detail::Zone;

  const std::size_t n = raw.size();
  if (n < 3) throw Error(ErrorKind::invalid_argument, "unwrap needs at least three points");
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(raw[i]) || raw[i] < -1e-9 || raw[i] > pi + 1e-9)
      throw Error(ErrorKind::invalid_argument, "raw retardance outside [0, pi] at index " + std::to_string(i));
  for (std::size_t i = 0; i + 1 < n; ++i)
    if (std::abs(raw[i + 1] - raw[i]) >= pi / 2)
      throw Error(ErrorKind::ambiguity, "sampling too coarse to resolve folds near index " + std::to_string(i));
  const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
  if (*hi - *lo <= 1e-12) throw Error(ErrorKind::ambiguity, "no retardance variation to unwrap");

  const std::vector<Run> runs = detail::zone_runs(raw, fold_threshold);
  std::vector<std::size_t> segments;
  for (std::size_t r = 0; r < runs.size(); ++r)
    if (runs[r].zone == Zone::none) segments.push_back(r);

  UnwrapResult result;
  result.values.assign(raw.begin(), raw.end());
  if (segments.empty()) return result;

  // Slope sign of each segment, measured between its neighbouring samples.
  std::vector<double> direction(runs.size(), 0.0);
  for (std::size_t r : segments) {
    const Run& seg = runs[r];
    const std::size_t a = seg.begin > 0 ? seg.begin - 1 : seg.begin;
    const std::size_t b = seg.end < n ? seg.end : seg.end - 1;
    const double d = raw[b] - raw[a];
    if (d == 0.0)
      throw Error(ErrorKind::ambiguity, "flat segment starting at index " + std::to_string(seg.begin));
    direction[r] = d > 0 ? 1.0 : -1.0;

    const double end_hi = std::max(raw[seg.begin], raw[seg.end - 1]);
    const double end_lo = std::min(raw[seg.begin], raw[seg.end - 1]);
    for (std::size_t i = seg.begin; i < seg.end; ++i)
      if (raw[i] > end_hi + fold_threshold || raw[i] < end_lo - fold_threshold)
        throw Error(ErrorKind::ambiguity, "unresolved fold near index " + std::to_string(i));
  }

  std::vector<Branch> branch(runs.size());
  Branch current{};
  std::size_t previous_segment = segments.front();
  for (std::size_t r = 0; r < runs.size(); ++r) {
    if (runs[r].zone != Zone::none) continue;
    if (r != previous_segment && direction[r] != direction[previous_segment]) {
      const Zone z = runs[r - 1].zone;  // the zone separating the two segments
      if (z == Zone::high) current.k += static_cast<int>(current.s);
      current.s = -current.s;
      ++result.fold_count;
    }
    branch[r] = current;
    previous_segment = r;
  }

  auto assign = [&](std::size_t i, const Branch& b) { result.values[i] = b.value(raw[i]); };
  const double edge_margin = 0.5 * fold_threshold;
  Branch first_branch = branch[segments.front()];

  for (std::size_t r = 0; r < runs.size(); ++r) {
    const Run& run = runs[r];
    if (run.zone == Zone::none) {
      for (std::size_t i = run.begin; i < run.end; ++i) assign(i, branch[r]);
      continue;
    }
    if (r == 0 || r + 1 == runs.size()) {
      // Edge zone: the curve may pass the extremum before the data ends.
      const bool start = r == 0;
      const Branch& inner = branch[start ? r + 1 : r - 1];
      const std::size_t edge = start ? run.begin : run.end - 1;
      std::size_t apex = edge;
      for (std::size_t i = run.begin; i < run.end; ++i)
        if (run.zone == Zone::high ? raw[i] > raw[apex] : raw[i] < raw[apex]) apex = i;
      if (apex == edge || std::abs(raw[apex] - raw[edge]) <= edge_margin) {
        for (std::size_t i = run.begin; i < run.end; ++i) assign(i, inner);
        continue;
      }
      // Same reflection in either direction: across pi the 2pi count moves by s.
      const Branch outer{run.zone == Zone::high ? inner.k + static_cast<int>(inner.s) : inner.k, -inner.s};
      ++result.fold_count;
      for (std::size_t i = run.begin; i < run.end; ++i) {
        const bool outside = start ? i < apex : i > apex;
        assign(i, outside ? outer : inner);
      }
      // The apex sample goes to the branch the inner side extrapolates to.
      const std::size_t n1 = start ? apex + 1 : apex - 1, n2 = start ? apex + 2 : apex - 2;
      if (n2 < n) {
        const double predicted = 2.0 * result.values[n1] - result.values[n2];
        const double a = inner.value(raw[apex]), b = outer.value(raw[apex]);
        result.values[apex] = std::abs(a - predicted) <= std::abs(b - predicted) ? a : b;
      }
      if (start) first_branch = outer;
      continue;
    }
    const Branch& left = branch[r - 1];
    const Branch& right = branch[r + 1];
    if (left.s == right.s && left.k == right.k) {
      for (std::size_t i = run.begin; i < run.end; ++i) assign(i, left);
      continue;
    }
    // Fold: split at the extremum of the zone.
    std::size_t apex = run.begin;
    for (std::size_t i = run.begin; i < run.end; ++i) {
      const bool better = run.zone == Zone::high ? raw[i] > raw[apex] : raw[i] < raw[apex];
      if (better) apex = i;
    }
    for (std::size_t i = run.begin; i < apex; ++i) assign(i, left);
    for (std::size_t i = apex + 1; i < run.end; ++i) assign(i, right);

    const auto& y = result.values;
    double predicted = left.value(raw[apex]);
    if (apex >= 3)
      predicted = 3.0 * y[apex - 1] - 3.0 * y[apex - 2] + y[apex - 3];
    else if (apex >= 2)
      predicted = 2.0 * y[apex - 1] - y[apex - 2];
    const double from_left = left.value(raw[apex]);
    const double from_right = right.value(raw[apex]);
    result.values[apex] =
        std::abs(from_left - predicted) <= std::abs(from_right - predicted) ? from_left : from_right;
  }

  // Re-anchor so the first point keeps its raw value.
  if (first_branch.k != 0 || first_branch.s != 1.0)
    for (double& v : result.values) v = first_branch.s * (v - two_pi * first_branch.k);

  for (std::size_t i = 0; i + 1 < n; ++i)
    if (std::abs(result.values[i + 1] - result.values[i]) >= pi / 2)
      throw Error(ErrorKind::ambiguity, "discontinuous unwrap near index " + std::to_string(i));
  return result;
}

// ---------------------------------------------------------------------------
// Curve construction and lookup

struct CurveBuildOptions {
  double fold_threshold = 0.15;
  double wavelength_nm = 808.0;
};

/// Builds the retardance-voltage curve of one LCVR. V_max is the largest
/// observed mean detector voltage. The unwrapped curve is oriented to decrease
/// with voltage and placed on the lowest non-negative branch at the highest
/// drive voltage.
[[nodiscard]] inline RetardanceCurve build_curve(const CharacterizationSweep& sweep,
                                                 const CurveBuildOptions& options = {}) {
  sweep.validate();
  const auto& pts = sweep.points;
  const double v_back = sweep.background_voltage;
  const double v_max =
      std::max_element(pts.begin(), pts.end(), [](const SweepPoint& a, const SweepPoint& b) {
        return a.mean_pd_voltage < b.mean_pd_voltage;
      })->mean_pd_voltage;

  std::vector<double> raw(pts.size());
  std::vector<bool> clamped(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto sample = retardance_sample(pts[i].mean_pd_voltage, v_back, v_max);
    raw[i] = sample.retardance;
    clamped[i] = sample.clamped;
  }

  UnwrapResult unwrapped = unwrap_retardance(raw, options.fold_threshold);
  auto& values = unwrapped.values;
  if (values.back() > values.front())
    for (double& v : values) v = -v;
  const double shift = two_pi * std::floor(values.back() / two_pi);
  for (double& v : values) v -= shift;

  RetardanceCurve curve;
  curve.wavelength_nm = options.wavelength_nm;
  curve.fold_count = unwrapped.fold_count;
  curve.voltage_step_v = (pts.back().drive_voltage_rms - pts.front().drive_voltage_rms) /
                         static_cast<double>(pts.size() - 1);
  curve.points.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CurvePoint cp{pts[i].drive_voltage_rms, values[i], std::nullopt, static_cast<bool>(clamped[i])};
    const double v = pts[i].mean_pd_voltage;
    if (!clamped[i] && v > v_back && v < v_max)
      cp.retardance_error = retardance_error(v, v_back, v_max, pts[i].pd_voltage_sem, sweep.background_sem);
    curve.points.push_back(cp);
  }
  return curve;
}

namespace detail {

/// Index i of the segment [i, i+1] containing v; v must be within range.
inline std::size_t segment_index(const RetardanceCurve& curve, double v) {
  const auto& p = curve.points;
  auto it = std::upper_bound(p.begin(), p.end(), v,
                             [](double x, const CurvePoint& cp) { return x < cp.drive_voltage_rms; });
  std::size_t i = static_cast<std::size_t>(it - p.begin());
  if (i == 0) return 0;
  return std::min(i - 1, p.size() - 2);
}

}  // namespace detail

/// Piecewise-linear retardance at drive voltage v.
[[nodiscard]] inline double retardance_for_voltage(const RetardanceCurve& curve, double v) {
  if (curve.points.size() < 2) throw Error(ErrorKind::invalid_argument, "curve needs at least two points");
  if (!(v >= curve.min_voltage() && v <= curve.max_voltage()))
    throw Error(ErrorKind::out_of_range, "drive voltage " + std::to_string(v) + " V outside the curve");
  const std::size_t i = detail::segment_index(curve, v);
  const auto& a = curve.points[i];
  const auto& b = curve.points[i + 1];
  const double t = (v - a.drive_voltage_rms) / (b.drive_voltage_rms - a.drive_voltage_rms);
  return std::lerp(a.retardance, b.retardance, t);
}

/// |d(delta)/dV| of the curve segment containing v.
[[nodiscard]] inline double curve_slope(const RetardanceCurve& curve, double v) {
  if (curve.points.size() < 2) throw Error(ErrorKind::invalid_argument, "curve needs at least two points");
  const double vc = std::clamp(v, curve.min_voltage(), curve.max_voltage());
  const std::size_t i = detail::segment_index(curve, vc);
  const auto& a = curve.points[i];
  const auto& b = curve.points[i + 1];
  return std::abs((b.retardance - a.retardance) / (b.drive_voltage_rms - a.drive_voltage_rms));
}

struct VoltageLookup {
  double voltage = 0.0;
  bool clamped = false;  // target was outside the curve's retardance span
};

/// Drive voltage whose interpolated retardance equals `target`, scanning from
/// low to high voltage. Targets outside the span map to the knot with the
/// nearest retardance, with `clamped` set.
[[nodiscard]] inline VoltageLookup voltage_for_retardance(const RetardanceCurve& curve, double target) {
  const auto& p = curve.points;
  if (p.empty()) throw Error(ErrorKind::invalid_argument, "empty curve");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].retardance == target) return {p[i].drive_voltage_rms, false};
    if (i + 1 == p.size()) break;
    const double r0 = p[i].retardance;
    const double r1 = p[i + 1].retardance;
    if ((r0 < target && target < r1) || (r1 < target && target < r0)) {
      const double t = (target - r0) / (r1 - r0);
      return {std::lerp(p[i].drive_voltage_rms, p[i + 1].drive_voltage_rms, t), false};
    }
  }
  // Outside the span: the end of the curve on the target's side.
  const bool front = std::abs(p.front().retardance - target) <= std::abs(p.back().retardance - target);
  return {front ? p.front().drive_voltage_rms : p.back().drive_voltage_rms, true};
}

}  // namespace polcomp
