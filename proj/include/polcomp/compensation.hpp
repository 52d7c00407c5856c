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

// Closed-loop compensation with three LCVRs at 0, 45 and 0 degrees, plus an
// optional fourth at 45 degrees that only moves during fine tuning.
//
// Coarse phase: infer the SOP entering the compensator from the latest
// measurement, solve for the three retardances that map it onto the target,
// actuate, measure. Fine phase: coordinate descent over the drive voltages.
// Every measurement after the initial probe is one compensation step.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "polcomp/error.hpp"
#include "polcomp/lcvr.hpp"
#include "polcomp/noise.hpp"
#include "polcomp/stokes.hpp"

namespace polcomp {

struct RetardanceTriple {
  double d1 = 0.0;
  double d2 = 0.0;
  double d3 = 0.0;

  friend bool operator==(const RetardanceTriple&, const RetardanceTriple&) = default;
};

[[nodiscard]] inline MuellerMatrix mueller_lcvr_triple(const RetardanceTriple& t) noexcept {
  return mueller_lcvr_triple(t.d1, t.d2, t.d3);
}

inline constexpr double range_low = 0.2 * pi;
inline constexpr double range_high = 2.2 * pi;

/// d + 2pi k in [0.2pi, 2.2pi).
[[nodiscard]] inline double shift_to_range(double d) noexcept {
  double t = std::fmod(d - range_low, two_pi);
  if (t < 0.0) t += two_pi;
  double out = range_low + t;
  if (out >= range_high) out -= two_pi;
  return out;
}

[[nodiscard]] inline RetardanceTriple shift_to_range(const RetardanceTriple& t) noexcept {
  return {shift_to_range(t.d1), shift_to_range(t.d2), shift_to_range(t.d3)};
}

struct LoopConfig {
  double coarse_threshold = 0.97;
  double fine_threshold = 0.995;
  int max_coarse_steps = 10;
  int max_fine_steps = 100;
  int max_total_steps = 0;  // 0: max_coarse_steps + max_fine_steps
  double fine_step_v = 0.02;    // minimum fine-tune voltage move
  double fine_step_rad = 0.05;  // retardance change aimed for per move; 0 keeps fine_step_v
  int multistart_count = 8;
  double solver_tolerance = 1e-10;

  void validate() const {
    if (!(0.0 < coarse_threshold && coarse_threshold < fine_threshold && fine_threshold < 1.0))
      throw Error(ErrorKind::invalid_argument, "need 0 < coarse_threshold < fine_threshold < 1");
    if (max_coarse_steps < 1 || max_fine_steps < 0 || max_total_steps < 0 || multistart_count < 1)
      throw Error(ErrorKind::invalid_argument, "step budgets and multistart count must be positive");
    if (!(fine_step_v > 0.0) || !(fine_step_rad >= 0.0) || !(solver_tolerance > 0.0))
      throw Error(ErrorKind::invalid_argument, "fine_step_v and solver_tolerance must be positive");
  }

  [[nodiscard]] int total_budget() const noexcept {
    return max_total_steps > 0 ? max_total_steps : max_coarse_steps + max_fine_steps;
  }
};

// ---------------------------------------------------------------------------
// Inversion and retardance solve

/// SOP entering the three LCVRs, given the SOP measured behind them.
[[nodiscard]] inline NormalizedStokes infer_disturbed(const NormalizedStokes& s_meas,
                                                      const RetardanceTriple& current) {
  const MuellerMatrix inverse = invert_retarder(mueller_lcvr_triple(current));
  return normalize(apply(inverse, s_meas.as_stokes()));
}

namespace detail {

using Vec3 = std::array<double, 3>;

inline Vec3 mul(const Matrix3& m, const Vec3& x) noexcept {
  return {m[0][0] * x[0] + m[0][1] * x[1] + m[0][2] * x[2],
          m[1][0] * x[0] + m[1][1] * x[1] + m[1][2] * x[2],
          m[2][0] * x[0] + m[2][1] * x[1] + m[2][2] * x[2]};
}

inline double norm(const Vec3& v) noexcept { return std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]); }

// Poincare rotations of a retarder at 0 and at 45 degrees, and their derivatives.
inline Matrix3 rot0(double d) noexcept {
  const double c = std::cos(d), s = std::sin(d);
  return {{{1, 0, 0}, {0, c, s}, {0, -s, c}}};
}
inline Matrix3 rot0_prime(double d) noexcept {
  const double c = std::cos(d), s = std::sin(d);
  return {{{0, 0, 0}, {0, -s, c}, {0, -c, -s}}};
}
inline Matrix3 rot45(double d) noexcept {
  const double c = std::cos(d), s = std::sin(d);
  return {{{c, 0, -s}, {0, 1, 0}, {s, 0, c}}};
}
inline Matrix3 rot45_prime(double d) noexcept {
  const double c = std::cos(d), s = std::sin(d);
  return {{{-s, 0, -c}, {0, 0, 0}, {c, 0, -s}}};
}

/// Solves the symmetric 3x3 system a x = b by Gaussian elimination with pivoting.
inline std::optional<Vec3> solve3(Matrix3 a, Vec3 b) noexcept {
  for (int col = 0; col < 3; ++col) {
    int pivot = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
    if (a[pivot][col] == 0.0) return std::nullopt;
    std::swap(a[pivot], a[col]);
    std::swap(b[pivot], b[col]);
    for (int r = col + 1; r < 3; ++r) {
      const double f = a[r][col] / a[col][col];
      for (int c = col; c < 3; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  Vec3 x{};
  for (int r = 2; r >= 0; --r) {
    double acc = b[r];
    for (int c = r + 1; c < 3; ++c) acc -= a[r][c] * x[c];
    x[r] = acc / a[r][r];
  }
  return x;
}

/// Residual M(d) x - y on the polarized components.
inline Vec3 residual(const RetardanceTriple& d, const Vec3& x, const Vec3& y) noexcept {
  const Vec3 out = mul(rot0(d.d3) * rot45(d.d2) * rot0(d.d1), x);
  return {out[0] - y[0], out[1] - y[1], out[2] - y[2]};
}

inline Vec3 as_vec(const NormalizedStokes& u) noexcept { return {u.u1, u.u2, u.u3}; }

/// Damped Gauss-Newton (Levenberg) iteration from one starting point.
inline std::optional<RetardanceTriple> solve_from(RetardanceTriple d, const Vec3& x, const Vec3& y,
                                                  double tolerance, int max_iterations = 200) {
  Vec3 r = residual(d, x, y);
  double cost = norm(r);
  double lambda = 1e-3;
  for (int it = 0; it < max_iterations; ++it) {
    if (cost <= tolerance) return d;
    const Matrix3 r1 = rot0(d.d1), r2 = rot45(d.d2), r3 = rot0(d.d3);
    const std::array<Vec3, 3> cols{mul(r3 * r2 * rot0_prime(d.d1), x), mul(r3 * rot45_prime(d.d2) * r1, x),
                                   mul(rot0_prime(d.d3) * r2 * r1, x)};
    Matrix3 jtj{};
    Vec3 jtr{};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j)
        jtj[i][j] = cols[i][0] * cols[j][0] + cols[i][1] * cols[j][1] + cols[i][2] * cols[j][2];
      jtr[i] = cols[i][0] * r[0] + cols[i][1] * r[1] + cols[i][2] * r[2];
    }
    bool improved = false;
    while (!improved) {
      Matrix3 damped = jtj;
      for (int i = 0; i < 3; ++i) damped[i][i] += lambda;
      const auto step = solve3(damped, {-jtr[0], -jtr[1], -jtr[2]});
      if (step) {
        const RetardanceTriple trial{d.d1 + (*step)[0], d.d2 + (*step)[1], d.d3 + (*step)[2]};
        const Vec3 r_trial = residual(trial, x, y);
        const double cost_trial = norm(r_trial);
        if (cost_trial < cost) {
          d = trial;
          r = r_trial;
          cost = cost_trial;
          lambda = std::max(lambda * 0.1, 1e-12);
          improved = true;
          continue;
        }
      }
      lambda *= 10.0;
      if (lambda > 1e12) return cost <= tolerance ? std::optional<RetardanceTriple>(d) : std::nullopt;
    }
  }
  return cost <= tolerance ? std::optional<RetardanceTriple>(d) : std::nullopt;
}

}  // namespace detail

/// Residual norm |M_LCVRs(d) s_dis - s_target| on S1..S3.
[[nodiscard]] inline double solve_residual(const RetardanceTriple& d, const NormalizedStokes& s_dis,
                                           const NormalizedStokes& s_target) noexcept {
  return detail::norm(detail::residual(d, detail::as_vec(s_dis), detail::as_vec(s_target)));
}

/// Every converged multistart solution, shifted into [0.2pi, 2.2pi). Starts
/// are drawn uniformly from [0, 2pi)^3.
[[nodiscard]] inline std::vector<RetardanceTriple> solve_retardance_candidates(
    const NormalizedStokes& s_dis, const NormalizedStokes& s_target, const LoopConfig& config, Rng& rng) {
  if (!s_dis.is_unit(1e-6) || !s_target.is_unit(1e-6))
    throw Error(ErrorKind::not_normalized, "retardance solve needs unit Stokes vectors");
  const auto x = detail::as_vec(s_dis);
  const auto y = detail::as_vec(s_target);
  std::uniform_real_distribution<double> start(0.0, two_pi);
  std::vector<RetardanceTriple> out;
  for (int attempt = 0; attempt < config.multistart_count; ++attempt) {
    const RetardanceTriple d0{start(rng), start(rng), start(rng)};
    if (auto solved = detail::solve_from(d0, x, y, config.solver_tolerance)) {
      const RetardanceTriple shifted = shift_to_range(*solved);
      if (solve_residual(shifted, s_dis, s_target) <= config.solver_tolerance * 10.0) out.push_back(shifted);
    }
  }
  return out;
}

/// First converged solution; throws solver_failure if no start converges.
[[nodiscard]] inline RetardanceTriple solve_retardances(const NormalizedStokes& s_dis,
                                                        const NormalizedStokes& s_target,
                                                        const LoopConfig& config, Rng& rng) {
  auto candidates = solve_retardance_candidates(s_dis, s_target, config, rng);
  if (candidates.empty())
    throw Error(ErrorKind::solver_failure,
                "no convergent start after " + std::to_string(config.multistart_count) + " attempts");
  return candidates.front();
}

// ---------------------------------------------------------------------------
// QBER arithmetic

// Fidelities and error rates are decimal quantities, so the sums are done on
// the shortest decimal form of each input and rounded once at the end:
// qber_opt(0.99) is 0.005, not 0.0050000000000000044.

namespace detail {

__extension__ using wide = __int128;

struct Decimal {
  wide mantissa = 0;  // value = mantissa * 10^exponent
  int exponent = 0;
};

inline Decimal to_decimal(double x) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x, std::chars_format::scientific);
  const std::string_view s(buf, static_cast<std::size_t>(res.ptr - buf));
  const std::size_t e = s.find('e');
  Decimal d;
  int digits = 0;
  for (char c : s.substr(0, e))
    if (c >= '0' && c <= '9') {
      d.mantissa = d.mantissa * 10 + (c - '0');
      ++digits;
    }
  std::string_view exp = s.substr(e + 1);
  if (!exp.empty() && exp.front() == '+') exp.remove_prefix(1);
  int e10 = 0;
  std::from_chars(exp.data(), exp.data() + exp.size(), e10);
  d.exponent = e10 - (digits - 1);
  if (x < 0) d.mantissa = -d.mantissa;
  return d;
}

inline double to_double(const Decimal& d) {
  if (d.mantissa == 0) return 0.0;
  std::string text;
  for (wide m = d.mantissa < 0 ? -d.mantissa : d.mantissa; m > 0; m /= 10) text.push_back(char('0' + int(m % 10)));
  if (d.mantissa < 0) text.push_back('-');
  std::reverse(text.begin(), text.end());
  text += "e" + std::to_string(d.exponent);
  double x = 0.0;
  std::from_chars(text.data(), text.data() + text.size(), x);
  return x;
}

inline constexpr wide wide_limit = wide(1) << 120;

inline std::optional<Decimal> scale_down(Decimal d, int exponent) {
  for (; d.exponent > exponent; --d.exponent) {
    if (d.mantissa > wide_limit / 10 || d.mantissa < -wide_limit / 10) return std::nullopt;
    d.mantissa *= 10;
  }
  return d;
}

inline std::optional<Decimal> add(const Decimal& a, const Decimal& b) {
  const int e = std::min(a.exponent, b.exponent);
  const auto x = scale_down(a, e), y = scale_down(b, e);
  if (!x || !y) return std::nullopt;
  return Decimal{x->mantissa + y->mantissa, e};
}

inline std::optional<Decimal> halve(const Decimal& d) {
  if (d.mantissa % 2 == 0) return Decimal{d.mantissa / 2, d.exponent};
  if (d.mantissa > wide_limit / 5 || d.mantissa < -wide_limit / 5) return std::nullopt;
  return Decimal{d.mantissa * 5, d.exponent - 1};
}

}  // namespace detail

/// (1 - F) / 2.
[[nodiscard]] inline double qber_opt(double f) {
  if (!(f >= 0.0 && f <= 1.0)) throw Error(ErrorKind::out_of_range, "fidelity must lie in [0, 1]");
  auto neg = detail::to_decimal(f);
  neg.mantissa = -neg.mantissa;
  if (const auto diff = detail::add({1, 0}, neg))
    if (const auto half = detail::halve(*diff)) return detail::to_double(*half);
  return (1.0 - f) / 2.0;  // input too far from a short decimal to matter
}

[[nodiscard]] inline double qber_total(double opt, double det, double acc) {
  if (!(opt >= 0.0) || !(det >= 0.0) || !(acc >= 0.0) || !std::isfinite(opt + det + acc))
    throw Error(ErrorKind::out_of_range, "QBER contributions must be non-negative");
  if (const auto ab = detail::add(detail::to_decimal(opt), detail::to_decimal(det)))
    if (const auto sum = detail::add(*ab, detail::to_decimal(acc))) return detail::to_double(*sum);
  return opt + det + acc;
}

// ---------------------------------------------------------------------------
// Loop state

using CurveSet = std::vector<RetardanceCurve>;

inline constexpr std::array<double, 4> lcvr_angles{0.0, pi / 4, 0.0, pi / 4};

struct DriveVoltages {
  std::array<double, 4> v{};
  std::size_t count = 3;  // 3, or 4 when the anti-gimbal LCVR is fitted

  friend bool operator==(const DriveVoltages&, const DriveVoltages&) = default;
};

template <class P>
concept MeasurementProvider = requires(P& p, const DriveVoltages& v) {
  { p.measure(v) } -> std::convertible_to<NormalizedStokes>;
};

struct CompensatorState {
  RetardanceTriple retardances;
  std::optional<double> fourth_retardance;
  DriveVoltages voltages;
};

enum class Phase { coarse, fine };

[[nodiscard]] constexpr std::string_view to_string(Phase p) noexcept {
  return p == Phase::coarse ? "coarse" : "fine";
}

struct StepRecord {
  int step = 0;
  Phase phase = Phase::coarse;
  CompensatorState state;
  NormalizedStokes measured;
  double fidelity = 0.0;
  double best_fidelity = 0.0;
  bool accepted = true;  // false when the setting was reverted
};

enum class Termination { running, completed, budget_exhausted };

[[nodiscard]] constexpr std::string_view to_string(Termination t) noexcept {
  switch (t) {
    case Termination::running: return "running";
    case Termination::completed: return "completed";
    case Termination::budget_exhausted: return "budget_exhausted";
  }
  return "running";
}

struct Milestones {
  std::optional<int> steps_to_97;
  std::optional<int> steps_to_99;
  std::optional<int> steps_to_995;
};

/// State and log of one compensation run. Single owner, mutated in sequence.
class CompensationRun {
 public:
  CompensationRun(std::shared_ptr<const CurveSet> curves, NormalizedStokes target, LoopConfig config,
                  std::uint64_t seed)
      : curves_(std::move(curves)), target_(target), config_(config), rng_(seed) {
    config_.validate();
    if (!curves_ || curves_->size() < 3 || curves_->size() > 4)
      throw Error(ErrorKind::invalid_argument, "compensation needs three or four LCVR curves");
    for (const auto& c : *curves_) c.validate();
    if (!target_.is_unit(1e-6)) throw Error(ErrorKind::not_normalized, "target must be a unit Stokes vector");
  }

  [[nodiscard]] const std::vector<StepRecord>& steps() const noexcept { return steps_; }
  [[nodiscard]] Termination termination() const noexcept { return termination_; }
  [[nodiscard]] bool finished() const noexcept { return termination_ != Termination::running; }
  [[nodiscard]] Phase phase() const noexcept { return phase_; }
  [[nodiscard]] const NormalizedStokes& target() const noexcept { return target_; }
  [[nodiscard]] const LoopConfig& config() const noexcept { return config_; }
  [[nodiscard]] const CurveSet& curves() const noexcept { return *curves_; }
  [[nodiscard]] bool has_fourth() const noexcept { return curves_->size() == 4; }
  [[nodiscard]] const CompensatorState& committed() const noexcept { return committed_; }
  [[nodiscard]] double best_fidelity() const noexcept { return best_; }
  [[nodiscard]] int step_count() const noexcept { return steps_.empty() ? 0 : steps_.back().step; }

  /// Milestones count steps from 1; the initial probe (step 0) is excluded.
  [[nodiscard]] Milestones milestones() const {
    Milestones m;
    for (const auto& s : steps_) {
      if (s.step == 0) continue;
      if (!m.steps_to_97 && s.fidelity >= 0.97) m.steps_to_97 = s.step;
      if (!m.steps_to_99 && s.fidelity >= 0.99) m.steps_to_99 = s.step;
      if (!m.steps_to_995 && s.fidelity >= 0.995) m.steps_to_995 = s.step;
    }
    return m;
  }

  /// Compensator state with the given drive voltages; retardances follow the curves.
  [[nodiscard]] CompensatorState state_for_voltages(const DriveVoltages& v) const {
    CompensatorState s;
    s.voltages = v;
    const auto& c = *curves_;
    s.retardances = {retardance_for_voltage(c[0], v.v[0]), retardance_for_voltage(c[1], v.v[1]),
                     retardance_for_voltage(c[2], v.v[2])};
    if (v.count == 4) s.fourth_retardance = retardance_for_voltage(c[3], v.v[3]);
    return s;
  }

  /// Maps a retardance triple to voltages; the fourth LCVR keeps `fourth_v`.
  [[nodiscard]] CompensatorState state_for_retardances(const RetardanceTriple& t, double fourth_v) const {
    const auto& c = *curves_;
    DriveVoltages v;
    v.count = curves_->size();
    v.v[0] = voltage_for_retardance(c[0], t.d1).voltage;
    v.v[1] = voltage_for_retardance(c[1], t.d2).voltage;
    v.v[2] = voltage_for_retardance(c[2], t.d3).voltage;
    if (v.count == 4) v.v[3] = fourth_v;
    return state_for_voltages(v);
  }

  /// Rotation applied after the three solving LCVRs (identity without a fourth).
  [[nodiscard]] MuellerMatrix trailing_matrix(const CompensatorState& s) const {
    return s.fourth_retardance ? mueller_lcvr(lcvr_angles[3], *s.fourth_retardance) : MuellerMatrix::identity();
  }

  // Internal bookkeeping used by the loop functions below.
  Rng& rng() noexcept { return rng_; }

  void record(Phase phase, const CompensatorState& state, const NormalizedStokes& measured, bool accept_if_better) {
    StepRecord rec;
    rec.step = steps_.empty() ? 0 : steps_.back().step + 1;
    rec.phase = phase;
    rec.state = state;
    rec.measured = measured;
    rec.fidelity = fidelity(normalize(measured), target_);
    rec.accepted = !accept_if_better || steps_.empty() || rec.fidelity > best_;
    if (rec.accepted) {
      committed_ = state;
      committed_measurement_ = measured;
      best_ = rec.fidelity;
    }
    rec.best_fidelity = best_;
    latest_state_ = state;
    latest_measurement_ = measured;
    steps_.push_back(rec);
  }

  void set_phase(Phase p) noexcept { phase_ = p; }
  void finish(Termination t) noexcept { termination_ = t; }

  [[nodiscard]] const CompensatorState& latest_state() const noexcept { return latest_state_; }
  [[nodiscard]] const NormalizedStokes& latest_measurement() const noexcept { return latest_measurement_; }

  int coarse_steps_taken = 0;
  int fine_steps_taken = 0;
  std::size_t fine_cursor = 0;
  std::array<double, 4> fine_direction{1.0, 1.0, 1.0, 1.0};

 private:
  std::shared_ptr<const CurveSet> curves_;
  NormalizedStokes target_;
  LoopConfig config_;
  Rng rng_;
  std::vector<StepRecord> steps_;
  CompensatorState committed_;
  NormalizedStokes committed_measurement_;
  CompensatorState latest_state_;
  NormalizedStokes latest_measurement_;
  double best_ = 0.0;
  Phase phase_ = Phase::coarse;
  Termination termination_ = Termination::running;
};

namespace detail {

inline CompensatorState random_state(CompensationRun& run) {
  std::uniform_real_distribution<double> pick(range_low, range_high);
  const RetardanceTriple t{pick(run.rng()), pick(run.rng()), pick(run.rng())};
  double fourth_v = 0.0;
  if (run.has_fourth()) {
    const auto& c = run.curves()[3];
    fourth_v = 0.5 * (c.min_voltage() + c.max_voltage());
  }
  return run.state_for_retardances(t, fourth_v);
}

inline void check_budget(CompensationRun& run) {
  if (run.finished()) return;
  const auto& cfg = run.config();
  if (run.step_count() >= cfg.total_budget() ||
      (run.phase() == Phase::coarse && run.coarse_steps_taken >= cfg.max_coarse_steps) ||
      (run.phase() == Phase::fine && run.fine_steps_taken >= cfg.max_fine_steps))
    run.finish(Termination::budget_exhausted);
}

inline void after_measurement(CompensationRun& run) {
  const double f = run.steps().back().fidelity;
  const auto& cfg = run.config();
  if (run.phase() == Phase::coarse && f >= cfg.coarse_threshold) run.set_phase(Phase::fine);
  if (run.steps().back().step > 0 && f >= cfg.fine_threshold) {
    run.finish(Termination::completed);
    return;
  }
  check_budget(run);
}

}  // namespace detail

/// Sets arbitrary retardances and records the initial probe as step 0.
template <MeasurementProvider P>
void initialize_run(CompensationRun& run, P& measure) {
  if (!run.steps().empty()) throw Error(ErrorKind::invalid_argument, "run already initialized");
  const CompensatorState s = detail::random_state(run);
  run.record(Phase::coarse, s, measure.measure(s.voltages), false);
}

/// One measure-infer-solve-actuate cycle.
template <MeasurementProvider P>
void coarse_step(CompensationRun& run, P& measure) {
  if (run.finished()) return;
  if (run.steps().empty()) initialize_run(run, measure);
  const auto& curves = run.curves();

  // Undo the (fixed) fourth LCVR so the solve acts on the three-LCVR frame.
  const CompensatorState& basis = run.latest_state();
  const MuellerMatrix undo_fourth = invert_retarder(run.trailing_matrix(basis));
  const NormalizedStokes meas = normalize(apply(undo_fourth, normalize(run.latest_measurement()).as_stokes()));
  const NormalizedStokes goal = normalize(apply(undo_fourth, run.target().as_stokes()));
  const NormalizedStokes s_dis = infer_disturbed(meas, basis.retardances);

  const double fourth_v = basis.voltages.count == 4 ? basis.voltages.v[3] : 0.0;
  const auto candidates = solve_retardance_candidates(s_dis, goal, run.config(), run.rng());

  CompensatorState next;
  if (candidates.empty()) {
    next = detail::random_state(run);
  } else {
    // Prefer the solution sitting on the shallowest parts of the curves.
    double best_cost = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
      const CompensatorState s = run.state_for_retardances(c, fourth_v);
      double cost = 0.0;
      for (std::size_t i = 0; i < 3; ++i) cost += curve_slope(curves[i], s.voltages.v[i]);
      if (cost < best_cost) {
        best_cost = cost;
        next = s;
      }
    }
  }
  ++run.coarse_steps_taken;
  run.record(Phase::coarse, next, measure.measure(next.voltages), true);
  detail::after_measurement(run);
}

/// Voltage move worth about fine_step_rad of retardance on the local slope,
/// never below fine_step_v.
[[nodiscard]] inline double fine_step_voltage(const LoopConfig& config, const RetardanceCurve& curve, double v) {
  if (config.fine_step_rad <= 0.0) return config.fine_step_v;
  const double slope = curve_slope(curve, v);
  const double span = curve.max_voltage() - curve.min_voltage();
  const double step = slope > 0.0 ? config.fine_step_rad / slope : span;
  return std::clamp(step, config.fine_step_v, std::max(config.fine_step_v, 0.1 * span));
}

/// One coordinate-descent trial on the drive voltages, LCVR 1 -> 2 -> 3 (-> 4).
template <MeasurementProvider P>
void fine_tune_step(CompensationRun& run, P& measure) {
  if (run.finished()) return;
  if (run.best_fidelity() >= run.config().fine_threshold) {
    run.finish(Termination::completed);
    return;
  }
  run.set_phase(Phase::fine);
  const auto& curves = run.curves();
  const std::size_t count = run.committed().voltages.count;

  DriveVoltages trial = run.committed().voltages;
  bool found = false;
  for (std::size_t attempt = 0; attempt < 2 * count && !found; ++attempt) {
    const std::size_t i = run.fine_cursor;
    const double v = trial.v[i] + run.fine_direction[i] * fine_step_voltage(run.config(), curves[i], trial.v[i]);
    if (v >= curves[i].min_voltage() && v <= curves[i].max_voltage()) {
      trial.v[i] = v;
      found = true;
    } else {
      run.fine_direction[i] = -run.fine_direction[i];
      run.fine_cursor = (i + 1) % count;
    }
  }
  if (!found) {
    run.finish(Termination::budget_exhausted);
    return;
  }

  const std::size_t i = run.fine_cursor;
  ++run.fine_steps_taken;
  run.record(Phase::fine, run.state_for_voltages(trial), measure.measure(trial), true);
  if (!run.steps().back().accepted) {
    run.fine_direction[i] = -run.fine_direction[i];
    run.fine_cursor = (i + 1) % count;
  }
  detail::after_measurement(run);
}

/// Coarse loop to the coarse threshold, then fine tuning to the fine threshold.
template <MeasurementProvider P>
CompensationRun run_compensation(P& measure, std::shared_ptr<const CurveSet> curves,
                                 const NormalizedStokes& target, const LoopConfig& config, std::uint64_t seed) {
  CompensationRun run(std::move(curves), target, config, seed);
  initialize_run(run, measure);
  while (!run.finished()) {
    if (run.phase() == Phase::coarse)
      coarse_step(run, measure);
    else
      fine_tune_step(run, measure);
  }
  return run;
}

}  // namespace polcomp
