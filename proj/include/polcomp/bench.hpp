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

// Virtual apparatus: source -> fiber rotation -> LCVRs -> rotating QWP -> PBS
// -> detector, plus synthetic LCVR devices and the trial harness.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <thread>
#include <vector>

#include "polcomp/compensation.hpp"
#include "polcomp/error.hpp"
#include "polcomp/lcvr.hpp"
#include "polcomp/noise.hpp"
#include "polcomp/polarimetry.hpp"
#include "polcomp/stokes.hpp"

namespace polcomp {

// ---------------------------------------------------------------------------
// Fiber disturbance

struct FiberDisturbance {
  MuellerMatrix rotation = MuellerMatrix::identity();
  std::uint64_t seed = 0;
};

/// Rotation matrix of the unit quaternion (w, x, y, z).
[[nodiscard]] inline Matrix3 quaternion_to_rotation(double w, double x, double y, double z) noexcept {
  return {{{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
           {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
           {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}}};
}

/// Haar-uniform rotation of the Poincare sphere (Shoemake's quaternion sampling).
[[nodiscard]] inline FiberDisturbance random_disturbance(std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double u1 = uni(rng), u2 = uni(rng), u3 = uni(rng);
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double w = a * std::sin(two_pi * u2);
  const double x = a * std::cos(two_pi * u2);
  const double y = b * std::sin(two_pi * u3);
  const double z = b * std::cos(two_pi * u3);
  return {MuellerMatrix::from_rotation(quaternion_to_rotation(w, x, y, z)), seed};
}

// ---------------------------------------------------------------------------
// Synthetic LCVR devices

/// Nematic retardance-voltage response
///   delta(V) = low + (high - low) * (h(V) - h(V_end)) / (h(V_start) - h(V_end)),
///   h(V) = 1 / (1 + (V / knee)^exponent),
/// so delta(V_start) = high and delta(V_end) = low exactly.
struct LcvrModel {
  double high = 2.3 * pi;
  double low = 0.2 * pi;
  double knee_v = 1.6;
  double exponent = 2.4;
  double v_start = 0.1;
  double v_end = 16.0;
  double v_step = 0.01;

  [[nodiscard]] double retardance(double v) const noexcept {
    auto h = [&](double x) { return 1.0 / (1.0 + std::pow(x / knee_v, exponent)); };
    return low + (high - low) * (h(v) - h(v_end)) / (h(v_start) - h(v_end));
  }

  [[nodiscard]] std::size_t knot_count() const noexcept {
    return static_cast<std::size_t>(std::llround((v_end - v_start) / v_step)) + 1;
  }

  [[nodiscard]] double knot_voltage(std::size_t i) const noexcept {
    return v_start + static_cast<double>(i) * v_step;
  }

  /// Re-solves knee_v (bisection) so that the knot nearest `v_at_pi` has
  /// retardance pi; the characterization maximum then falls on a knot.
  [[nodiscard]] LcvrModel with_knot_at_pi(double v_at_pi) const {
    LcvrModel m = *this;
    const std::size_t idx = static_cast<std::size_t>(std::llround((v_at_pi - v_start) / v_step));
    const double v = knot_voltage(idx);
    double lo = 0.05, hi = 20.0;  // retardance(v) increases with the knee voltage
    for (int it = 0; it < 200; ++it) {
      m.knee_v = 0.5 * (lo + hi);
      if (m.retardance(v) < pi)
        lo = m.knee_v;
      else
        hi = m.knee_v;
    }
    return m;
  }

  /// Curve sampled exactly at the drive-voltage knots.
  [[nodiscard]] RetardanceCurve curve(double wavelength_nm = 808.0) const {
    RetardanceCurve c;
    c.wavelength_nm = wavelength_nm;
    c.voltage_step_v = v_step;
    const std::size_t n = knot_count();
    c.points.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = knot_voltage(i);
      c.points.push_back({v, retardance(v), std::nullopt, false});
    }
    c.fold_count = static_cast<int>(std::ceil(high / pi) - std::floor(low / pi)) - 1;
    return c;
  }
};

/// Four devices with slightly different responses, all spanning [0.2pi, 2.3pi].
[[nodiscard]] inline std::vector<LcvrModel> default_lcvr_models() {
  std::vector<LcvrModel> models(4);
  const std::array<double, 4> knee{1.6, 1.75, 1.5, 1.68};
  const std::array<double, 4> exponent{2.4, 2.2, 2.6, 2.3};
  for (std::size_t i = 0; i < 4; ++i) {
    models[i].knee_v = knee[i];
    models[i].exponent = exponent[i];
  }
  return models;
}

[[nodiscard]] inline std::shared_ptr<const CurveSet> default_curve_set(std::size_t count = 4) {
  auto set = std::make_shared<CurveSet>();
  const auto models = default_lcvr_models();
  for (std::size_t i = 0; i < count && i < models.size(); ++i) set->push_back(models[i].curve());
  return set;
}

struct SweepNoise {
  double pd_sigma = 0.0;          // volts per detector sample
  std::size_t samples_per_point = 10;
  std::size_t background_samples = 100;
  double full_scale_v = 1.0;      // V_max - V_back
  double background_v = 0.01;
};

/// Characterization sweep of `model` at 45 degrees between crossed analyzers.
[[nodiscard]] inline CharacterizationSweep simulate_sweep(const LcvrModel& model, const SweepNoise& noise,
                                                          std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto mean_and_sem = [&](double truth, std::size_t count) {
    if (noise.pd_sigma == 0.0 || count < 2) return std::pair<double, double>{truth, 0.0};
    double sum = 0.0, sum2 = 0.0;
    for (std::size_t k = 0; k < count; ++k) {
      const double x = truth + noise.pd_sigma * gauss(rng);
      sum += x;
      sum2 += x * x;
    }
    const double n = static_cast<double>(count);
    const double mean = sum / n;
    const double var = std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0));
    return std::pair<double, double>{mean, std::sqrt(var / n)};
  };

  CharacterizationSweep sweep;
  const auto [back, back_sem] = mean_and_sem(noise.background_v, noise.background_samples);
  sweep.background_voltage = back;
  sweep.background_sem = back_sem;
  const std::size_t n = model.knot_count();
  sweep.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = model.knot_voltage(i);
    const double intensity = 0.5 * (1.0 - std::cos(model.retardance(v)));
    const auto [mean, sem] = mean_and_sem(noise.background_v + noise.full_scale_v * intensity,
                                          noise.samples_per_point);
    sweep.points.push_back({v, mean, sem});
  }
  return sweep;
}

// ---------------------------------------------------------------------------
// Apparatus

/// Simulated bench. The compensator's curves describe the LCVRs; the physical
/// response adds drive quantization and a smooth systematic bias.
class VirtualApparatus {
 public:
  VirtualApparatus(FiberDisturbance disturbance, std::shared_ptr<const CurveSet> curves,
                   StokesVector source, NoiseModel noise, std::uint64_t seed, ScanGeometry geometry = {})
      : disturbance_(std::move(disturbance)),
        curves_(std::move(curves)),
        source_(source),
        noise_(noise),
        geometry_(geometry),
        seed_(seed) {
    noise_.validate();
    if (!curves_ || curves_->size() < 3 || curves_->size() > 4)
      throw Error(ErrorKind::invalid_argument, "apparatus needs three or four LCVR curves");
    Rng rng(mix_seed(seed_, 0xB1A5));
    std::uniform_real_distribution<double> phase(0.0, two_pi);
    for (auto& p : bias_phase_) p = phase(rng);
  }

  /// Retardance the i-th cell actually produces at commanded voltage v.
  [[nodiscard]] double physical_retardance(std::size_t i, double v) const {
    const auto& c = (*curves_)[i];
    double vq = v;
    if (noise_.voltage_quantum_v > 0) vq = std::round(v / noise_.voltage_quantum_v) * noise_.voltage_quantum_v;
    vq = std::clamp(vq, c.min_voltage(), c.max_voltage());
    double d = retardance_for_voltage(c, vq);
    if (noise_.retardance_curve_error > 0)
      d += noise_.retardance_curve_error * std::sin(two_pi * vq / 5.0 + bias_phase_[i]);
    return d;
  }

  /// Noise-free state behind the compensator.
  [[nodiscard]] StokesVector true_state(const DriveVoltages& v) const {
    StokesVector s = apply(disturbance_.rotation, source_);
    for (std::size_t i = 0; i < v.count; ++i)
      s = apply(mueller_lcvr(lcvr_angles[i], physical_retardance(i, v.v[i])), s);
    return s;
  }

  /// Rotating-QWP record of the current output; each call draws a fresh noise stream.
  [[nodiscard]] PolarimeterScan scan(const DriveVoltages& v) {
    return simulate_scan(true_state(v), geometry_.n_samples, geometry_.step, geometry_.alpha, noise_,
                         mix_seed(seed_, ++measurements_));
  }

  [[nodiscard]] NormalizedStokes measure(const DriveVoltages& v) { return measure_stokes(scan(v)); }

  [[nodiscard]] std::uint64_t measurement_count() const noexcept { return measurements_; }
  [[nodiscard]] double modeled_time_s() const noexcept {
    return static_cast<double>(measurements_) * geometry_.scan_time_s;
  }
  [[nodiscard]] const FiberDisturbance& disturbance() const noexcept { return disturbance_; }
  [[nodiscard]] const NoiseModel& noise() const noexcept { return noise_; }

 private:
  FiberDisturbance disturbance_;
  std::shared_ptr<const CurveSet> curves_;
  StokesVector source_;
  NoiseModel noise_;
  ScanGeometry geometry_;
  std::uint64_t seed_;
  std::uint64_t measurements_ = 0;
  std::array<double, 4> bias_phase_{};
};

/// One simulated tomography scan of the chain source -> disturbance -> LCVRs.
[[nodiscard]] inline PolarimeterScan virtual_measure(const FiberDisturbance& disturbance,
                                                     const DriveVoltages& voltages,
                                                     std::shared_ptr<const CurveSet> curves,
                                                     const StokesVector& true_source, const NoiseModel& noise,
                                                     std::uint64_t seed) {
  for (std::size_t i = 0; i < voltages.count; ++i) {
    const auto& c = curves->at(i);
    if (!(voltages.v[i] >= c.min_voltage() && voltages.v[i] <= c.max_voltage()))
      throw Error(ErrorKind::out_of_range, "drive voltage outside the curve range");
  }
  VirtualApparatus bench(disturbance, std::move(curves), true_source, noise, seed);
  return bench.scan(voltages);
}

// ---------------------------------------------------------------------------
// Trials

struct TrialRecord {
  std::uint64_t seed = 0;
  Milestones milestones;
  Termination termination = Termination::running;
  int total_steps = 0;
  double modeled_time_s = 0.0;  // scan time only; no real-time claim
  std::vector<StepRecord> steps;
};

struct TrialStats {
  std::vector<TrialRecord> trials;
  std::optional<double> mean_steps_to_97;  // over trials reaching the threshold
  std::optional<double> mean_steps_to_99;
  std::optional<double> mean_steps_to_995;
  int unreached_97 = 0;
  int unreached_99 = 0;
  int unreached_995 = 0;
};

struct TrialOptions {
  NormalizedStokes target = states::R;
  StokesVector source{1.0, 1.0, 0.0, 0.0};
  std::shared_ptr<const CurveSet> curves;  // default_curve_set() when empty
  unsigned threads = 0;                    // 0: hardware concurrency
};

[[nodiscard]] inline TrialRecord run_trial(std::uint64_t seed, const LoopConfig& config, const NoiseModel& noise,
                                           const TrialOptions& options) {
  auto curves = options.curves ? options.curves : default_curve_set();
  VirtualApparatus bench(random_disturbance(mix_seed(seed, 1)), curves, options.source, noise, mix_seed(seed, 2));
  CompensationRun run = run_compensation(bench, curves, options.target, config, mix_seed(seed, 3));
  TrialRecord rec;
  rec.seed = seed;
  rec.milestones = run.milestones();
  rec.termination = run.termination();
  rec.total_steps = run.step_count();
  rec.modeled_time_s = bench.modeled_time_s();
  rec.steps = run.steps();
  return rec;
}

/// Aggregates milestone means; order-independent.
[[nodiscard]] inline TrialStats summarize(std::vector<TrialRecord> trials) {
  TrialStats stats;
  auto mean_of = [&](auto member, int& unreached) -> std::optional<double> {
    double sum = 0.0;
    int count = 0;
    for (const auto& t : trials) {
      if (const auto& m = t.milestones.*member) {
        sum += *m;
        ++count;
      } else {
        ++unreached;
      }
    }
    if (count == 0) return std::nullopt;
    return sum / count;
  };
  stats.mean_steps_to_97 = mean_of(&Milestones::steps_to_97, stats.unreached_97);
  stats.mean_steps_to_99 = mean_of(&Milestones::steps_to_99, stats.unreached_99);
  stats.mean_steps_to_995 = mean_of(&Milestones::steps_to_995, stats.unreached_995);
  stats.trials = std::move(trials);
  return stats;
}

/// n independent compensation runs; trial i uses seed mix_seed(base_seed, i).
[[nodiscard]] inline TrialStats run_trials(std::size_t n, const LoopConfig& config, const NoiseModel& noise,
                                           std::uint64_t base_seed, TrialOptions options = {}) {
  if (n < 1) throw Error(ErrorKind::invalid_argument, "run_trials needs n >= 1");
  config.validate();
  noise.validate();
  if (!options.curves) options.curves = default_curve_set();

  std::vector<TrialRecord> trials(n);
  unsigned workers = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers)
          trials[i] = run_trial(mix_seed(base_seed, i), config, noise, options);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return summarize(std::move(trials));
}

}  // namespace polcomp
