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

// Stokes vectors, Mueller matrices and the optical elements used by the
// polarimeter and the liquid-crystal compensator.
//
// Conventions: Stokes vectors are columns, matrices are row-major m[row][col],
// angles are radians measured from the horizontal axis, S3 = +1 is
// right-hand circular.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <initializer_list>
#include <numbers>
#include <span>
#include <string>

#include "polcomp/error.hpp"

namespace polcomp {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

[[nodiscard]] constexpr double deg_to_rad(double deg) noexcept { return deg * pi / 180.0; }
[[nodiscard]] constexpr double rad_to_deg(double rad) noexcept { return rad * 180.0 / pi; }

struct StokesVector {
  double s0 = 0.0;
  double s1 = 0.0;
  double s2 = 0.0;
  double s3 = 0.0;

  [[nodiscard]] double polarized_norm() const noexcept {
    return std::sqrt(s1 * s1 + s2 * s2 + s3 * s3);
  }

  /// s0 >= 0 and the polarized part does not exceed the intensity.
  [[nodiscard]] bool is_physical() const noexcept {
    return s0 >= 0.0 && (s1 * s1 + s2 * s2 + s3 * s3) <= s0 * s0 * (1.0 + 1e-9);
  }

  [[nodiscard]] StokesVector scaled(double k) const noexcept {
    return {k * s0, k * s1, k * s2, k * s3};
  }

  friend bool operator==(const StokesVector&, const StokesVector&) = default;
};

/// Point on the Poincare sphere.
struct NormalizedStokes {
  double u1 = 0.0;
  double u2 = 0.0;
  double u3 = 1.0;

  [[nodiscard]] double norm() const noexcept { return std::sqrt(u1 * u1 + u2 * u2 + u3 * u3); }

  [[nodiscard]] bool is_unit(double tol = 1e-9) const noexcept {
    return std::abs(u1 * u1 + u2 * u2 + u3 * u3 - 1.0) <= tol;
  }

  /// Fully polarized Stokes vector of unit intensity.
  [[nodiscard]] StokesVector as_stokes(double intensity = 1.0) const noexcept {
    return {intensity, intensity * u1, intensity * u2, intensity * u3};
  }

  friend bool operator==(const NormalizedStokes&, const NormalizedStokes&) = default;
};

namespace states {
inline constexpr NormalizedStokes H{1.0, 0.0, 0.0};
inline constexpr NormalizedStokes V{-1.0, 0.0, 0.0};
inline constexpr NormalizedStokes D{0.0, 1.0, 0.0};
inline constexpr NormalizedStokes A{0.0, -1.0, 0.0};
inline constexpr NormalizedStokes R{0.0, 0.0, 1.0};
inline constexpr NormalizedStokes L{0.0, 0.0, -1.0};

inline constexpr std::array<NormalizedStokes, 6> cardinal{H, V, D, A, R, L};
inline constexpr std::array<char, 6> cardinal_names{'H', 'V', 'D', 'A', 'R', 'L'};
}  // namespace states

using Matrix3 = std::array<std::array<double, 3>, 3>;

[[nodiscard]] constexpr Matrix3 identity3() noexcept {
  return {{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
}

[[nodiscard]] constexpr Matrix3 operator*(const Matrix3& a, const Matrix3& b) noexcept {
  Matrix3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += a[i][k] * b[k][j];
      out[i][j] = acc;
    }
  return out;
}

[[nodiscard]] constexpr Matrix3 transpose(const Matrix3& a) noexcept {
  Matrix3 out{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out[i][j] = a[j][i];
  return out;
}

[[nodiscard]] constexpr double determinant(const Matrix3& a) noexcept {
  return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) -
         a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
         a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
}

struct MuellerMatrix {
  std::array<std::array<double, 4>, 4> m{};

  [[nodiscard]] static constexpr MuellerMatrix identity() noexcept {
    MuellerMatrix out;
    for (int i = 0; i < 4; ++i) out.m[i][i] = 1.0;
    return out;
  }

  /// Non-depolarizing retarder with the given Poincare-sphere rotation.
  [[nodiscard]] static constexpr MuellerMatrix from_rotation(const Matrix3& r) noexcept {
    MuellerMatrix out;
    out.m[0][0] = 1.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out.m[i + 1][j + 1] = r[i][j];
    return out;
  }

  /// Lower-right 3x3 block acting on (S1, S2, S3).
  [[nodiscard]] constexpr Matrix3 rotation_block() const noexcept {
    Matrix3 out{};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out[i][j] = m[i + 1][j + 1];
    return out;
  }

  [[nodiscard]] constexpr double operator()(int row, int col) const noexcept { return m[row][col]; }

  friend bool operator==(const MuellerMatrix&, const MuellerMatrix&) = default;
};

[[nodiscard]] constexpr MuellerMatrix operator*(const MuellerMatrix& a,
                                                const MuellerMatrix& b) noexcept {
  MuellerMatrix out;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 4; ++k) acc += a.m[i][k] * b.m[k][j];
      out.m[i][j] = acc;
    }
  return out;
}

[[nodiscard]] constexpr StokesVector apply(const MuellerMatrix& mm, const StokesVector& s) noexcept {
  const auto& m = mm.m;
  return {m[0][0] * s.s0 + m[0][1] * s.s1 + m[0][2] * s.s2 + m[0][3] * s.s3,
          m[1][0] * s.s0 + m[1][1] * s.s1 + m[1][2] * s.s2 + m[1][3] * s.s3,
          m[2][0] * s.s0 + m[2][1] * s.s1 + m[2][2] * s.s2 + m[2][3] * s.s3,
          m[3][0] * s.s0 + m[3][1] * s.s1 + m[3][2] * s.s2 + m[3][3] * s.s3};
}

[[nodiscard]] constexpr StokesVector operator*(const MuellerMatrix& m, const StokesVector& s) noexcept {
  return apply(m, s);
}

/// Largest absolute entry-wise difference.
[[nodiscard]] inline double max_abs_diff(const MuellerMatrix& a, const MuellerMatrix& b) noexcept {
  double worst = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) worst = std::max(worst, std::abs(a.m[i][j] - b.m[i][j]));
  return worst;
}

// ---------------------------------------------------------------------------
// Optical elements

/// Quarter-wave plate with its fast axis at `phi`.
[[nodiscard]] inline MuellerMatrix mueller_qwp(double phi) noexcept {
  const double c = std::cos(2.0 * phi);
  const double s = std::sin(2.0 * phi);
  return {{{{1.0, 0.0, 0.0, 0.0},
            {0.0, c * c, s * c, -s},
            {0.0, s * c, s * s, c},
            {0.0, s, -c, 0.0}}}};
}

/// Half-wave plate with its fast axis at `phi`.
[[nodiscard]] inline MuellerMatrix mueller_hwp(double phi) noexcept {
  const double c = std::cos(2.0 * phi);
  const double s = std::sin(2.0 * phi);
  return {{{{1.0, 0.0, 0.0, 0.0},
            {0.0, c * c - s * s, 2.0 * c * s, 0.0},
            {0.0, 2.0 * c * s, s * s - c * c, 0.0},
            {0.0, 0.0, 0.0, -1.0}}}};
}

/// Ideal polarizing beam splitter, transmitted (horizontal) port.
[[nodiscard]] inline MuellerMatrix mueller_pbs() noexcept {
  return {{{{0.5, 0.5, 0.0, 0.0},
            {0.5, 0.5, 0.0, 0.0},
            {0.0, 0.0, 0.0, 0.0},
            {0.0, 0.0, 0.0, 0.0}}}};
}

/// Linear retarder with fast axis at `theta` and retardance `delta`.
[[nodiscard]] inline MuellerMatrix mueller_lcvr(double theta, double delta) noexcept {
  const double c = std::cos(2.0 * theta);
  const double s = std::sin(2.0 * theta);
  const double cd = std::cos(delta);
  const double sd = std::sin(delta);
  return {{{{1.0, 0.0, 0.0, 0.0},
            {0.0, c * c + s * s * cd, c * s * (1.0 - cd), -s * sd},
            {0.0, c * s * (1.0 - cd), c * c * cd + s * s, c * sd},
            {0.0, s * sd, -c * sd, cd}}}};
}

/// Three retarders at 0, 45 and 0 degrees, in propagation order, in closed form.
[[nodiscard]] inline MuellerMatrix mueller_lcvr_triple(double d1, double d2, double d3) noexcept {
  const double c1 = std::cos(d1), s1 = std::sin(d1);
  const double c2 = std::cos(d2), s2 = std::sin(d2);
  const double c3 = std::cos(d3), s3 = std::sin(d3);
  return {{{{1.0, 0.0, 0.0, 0.0},
            {0.0, c2, s1 * s2, -c1 * s2},
            {0.0, s2 * s3, c1 * c3 - c2 * s1 * s3, c3 * s1 + c1 * c2 * s3},
            {0.0, c3 * s2, -c2 * c3 * s1 - c1 * s3, -s1 * s3 + c1 * c2 * c3}}}};
}

/// Product of an optical train given in propagation order: M_n ... M_2 M_1.
[[nodiscard]] inline MuellerMatrix compose(std::span<const MuellerMatrix> elements) {
  if (elements.empty()) throw Error(ErrorKind::invalid_scene, "compose() needs at least one element");
  MuellerMatrix out = elements.front();
  for (std::size_t i = 1; i < elements.size(); ++i) out = elements[i] * out;
  return out;
}

[[nodiscard]] inline MuellerMatrix compose(std::initializer_list<MuellerMatrix> elements) {
  return compose(std::span<const MuellerMatrix>(elements.begin(), elements.size()));
}

/// True when m is 1 (+) R with R orthogonal, within `tol`.
[[nodiscard]] inline bool is_retarder(const MuellerMatrix& mm, double tol = 1e-9) noexcept {
  const auto& m = mm.m;
  if (std::abs(m[0][0] - 1.0) > tol) return false;
  for (int k = 1; k < 4; ++k)
    if (std::abs(m[0][k]) > tol || std::abs(m[k][0]) > tol) return false;
  const Matrix3 r = mm.rotation_block();
  const Matrix3 rtr = transpose(r) * r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (std::abs(rtr[i][j] - (i == j ? 1.0 : 0.0)) > tol) return false;
  return true;
}

/// Inverse of a retarder matrix via the transpose of its orthogonal block.
[[nodiscard]] inline MuellerMatrix invert_retarder(const MuellerMatrix& m) {
  if (!is_retarder(m, 1e-9))
    throw Error(ErrorKind::structural, "matrix is not a retarder (3x3 block not orthogonal)");
  return MuellerMatrix::from_rotation(transpose(m.rotation_block()));
}

// ---------------------------------------------------------------------------
// Figures of merit

/// Poincare-sphere closeness of two fully polarized states, in [0, 1].
[[nodiscard]] inline double fidelity(const NormalizedStokes& a, const NormalizedStokes& b) {
  if (!a.is_unit(1e-6) || !b.is_unit(1e-6))
    throw Error(ErrorKind::not_normalized, "fidelity() needs unit Stokes vectors");
  const double f = 0.5 * (1.0 + a.u1 * b.u1 + a.u2 * b.u2 + a.u3 * b.u3);
  return std::clamp(f, 0.0, 1.0);
}

[[nodiscard]] inline double degree_of_polarization(const StokesVector& s) {
  if (!(s.s0 > 0.0)) throw Error(ErrorKind::invalid_argument, "degree of polarization needs s0 > 0");
  return s.polarized_norm() / s.s0;
}

/// Divides S1..S3 by the polarized magnitude (not by S0).
[[nodiscard]] inline NormalizedStokes normalize(const StokesVector& s) {
  const double p = s.polarized_norm();
  if (!(p > 0.0) || !std::isfinite(p))
    throw Error(ErrorKind::degenerate_state, "Stokes vector has no polarized component");
  return {s.s1 / p, s.s2 / p, s.s3 / p};
}

[[nodiscard]] inline NormalizedStokes normalize(const NormalizedStokes& u) {
  return normalize(u.as_stokes());
}

}  // namespace polcomp
