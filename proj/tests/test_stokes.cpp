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

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "polcomp/stokes.hpp"

using namespace polcomp;

namespace {

void expect_stokes(const StokesVector& s, double s0, double s1, double s2, double s3, double tol = 1e-12) {
  EXPECT_NEAR(s.s0, s0, tol);
  EXPECT_NEAR(s.s1, s1, tol);
  EXPECT_NEAR(s.s2, s2, tol);
  EXPECT_NEAR(s.s3, s3, tol);
}

std::mt19937_64& rng() {
  static std::mt19937_64 r(20240611);
  return r;
}

double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng()); }

}  // namespace

// --- element matrices against the Jones-calculus oracle --------------------

TEST(Elements, RetarderMatchesJonesOracle) {
  for (int i = 0; i < 200; ++i) {
    const double theta = uniform(-pi, pi), delta = uniform(-3 * pi, 3 * pi);
    EXPECT_LT(oracle::max_diff(oracle::retarder(theta, delta), mueller_lcvr(theta, delta)), 1e-12);
  }
}

TEST(Elements, WaveplatesMatchJonesOracle) {
  for (int i = 0; i < 100; ++i) {
    const double phi = uniform(-pi, pi);
    EXPECT_LT(oracle::max_diff(oracle::retarder(phi, pi / 2), mueller_qwp(phi)), 1e-12);
    EXPECT_LT(oracle::max_diff(oracle::retarder(phi, pi), mueller_hwp(phi)), 1e-12);
  }
}

TEST(Elements, PbsMatchesPolarizerOracle) {
  const auto pol = oracle::mueller_from_jones(oracle::jones_horizontal_polarizer());
  EXPECT_LT(oracle::max_diff(pol, mueller_pbs()), 1e-15);
}

TEST(Qwp, ZeroAngle) {
  const auto m = mueller_qwp(0.0);
  const double expected[4][4] = {{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 0, 1}, {0, 0, -1, 0}};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(m.m[i][j], expected[i][j], 1e-15) << i << "," << j;
}

TEST(Qwp, FortyFiveDegreesTurnsHorizontalIntoRightCircular) {
  expect_stokes(apply(mueller_qwp(pi / 4), {1, 1, 0, 0}), 1, 0, 0, 1);
}

TEST(Qwp, EighthTurnOnDiagonal) {
  const auto out = apply(mueller_qwp(pi / 8), {1, 0, 1, 0});
  const auto ref = oracle::matvec(oracle::retarder(pi / 8, pi / 2), {1, 0, 1, 0});
  expect_stokes(out, ref[0], ref[1], ref[2], ref[3]);
  expect_stokes(out, 1, 0.5, 0.5, -std::sqrt(0.5));
}

TEST(Hwp, SwapsHorizontalAndVerticalAtFortyFive) {
  expect_stokes(apply(mueller_hwp(pi / 4), {1, 1, 0, 0}), 1, -1, 0, 0);
}

TEST(Hwp, ZeroAngleIsDiagonal) {
  const auto m = mueller_hwp(0.0);
  const double diag[4] = {1, 1, -1, -1};
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(m.m[i][j], i == j ? diag[i] : 0.0, 1e-15);
}

TEST(Hwp, EighthTurnMapsHorizontalToDiagonal) {
  expect_stokes(apply(mueller_hwp(pi / 8), {1, 1, 0, 0}), 1, 0, 1, 0);
}

TEST(Pbs, Examples) {
  expect_stokes(apply(mueller_pbs(), {1, 1, 0, 0}), 1, 1, 0, 0);
  expect_stokes(apply(mueller_pbs(), {1, -1, 0, 0}), 0, 0, 0, 0);
  expect_stokes(apply(mueller_pbs(), {1, 0, 0, 1}), 0.5, 0.5, 0, 0);
  expect_stokes(apply(mueller_pbs(), {2, 0, 0, 0}), 1, 1, 0, 0);
}

TEST(Lcvr, HalfWaveAtFortyFiveEqualsHwp) {
  EXPECT_LT(max_abs_diff(mueller_lcvr(pi / 4, pi), mueller_hwp(pi / 4)), 1e-12);
}

TEST(Lcvr, ZeroRetardanceIsIdentity) {
  for (double theta : {0.0, 0.3, pi / 4, 2.0, -1.1})
    EXPECT_LT(max_abs_diff(mueller_lcvr(theta, 0.0), MuellerMatrix::identity()), 1e-15);
}

TEST(Lcvr, QuarterWaveAtZeroOnDiagonal) {
  expect_stokes(apply(mueller_lcvr(0.0, pi / 2), {1, 0, 1, 0}), 1, 0, 0, -1);
}

TEST(Triple, ZeroIsIdentity) {
  EXPECT_LE(max_abs_diff(mueller_lcvr_triple(0, 0, 0), MuellerMatrix::identity()), 1e-15);
}

TEST(Triple, QuarterWaveMiddleCellMakesCircular) {
  expect_stokes(apply(mueller_lcvr_triple(0, pi / 2, 0), {1, 1, 0, 0}), 1, 0, 0, 1);
}

TEST(Triple, MatchesComposedProductOverRandomTriples) {
  for (int i = 0; i < 1000; ++i) {
    const double d1 = uniform(-4 * pi, 4 * pi), d2 = uniform(-4 * pi, 4 * pi), d3 = uniform(-4 * pi, 4 * pi);
    const auto closed = mueller_lcvr_triple(d1, d2, d3);
    EXPECT_LT(oracle::max_diff(oracle::triple(d1, d2, d3), closed), 1e-12);
    const auto composed = compose({mueller_lcvr(0, d1), mueller_lcvr(pi / 4, d2), mueller_lcvr(0, d3)});
    EXPECT_LT(max_abs_diff(composed, closed), 1e-12);
  }
}

// --- composition and application -------------------------------------------

TEST(Compose, SingleIdentity) {
  EXPECT_EQ(compose({MuellerMatrix::identity()}), MuellerMatrix::identity());
}

TEST(Compose, TwoEqualHalfWavePlatesCancel) {
  const auto m = compose({mueller_hwp(pi / 8), mueller_hwp(pi / 8)});
  expect_stokes(apply(m, {1, 1, 0, 0}), 1, 1, 0, 0);
}

TEST(Compose, QwpThenPbsMatchesDirectProduct) {
  const double phi = pi / 6;
  const auto m = compose({mueller_qwp(phi), mueller_pbs()});
  const auto ref =
      oracle::matmul(oracle::mueller_from_jones(oracle::jones_horizontal_polarizer()), oracle::retarder(phi, pi / 2));
  EXPECT_LT(oracle::max_diff(ref, m), 1e-12);
}

TEST(Compose, OrderIsPropagationOrder) {
  // QWP then PBS differs from PBS then QWP.
  const auto forward = compose({mueller_qwp(pi / 8), mueller_pbs()});
  const auto backward = compose({mueller_pbs(), mueller_qwp(pi / 8)});
  EXPECT_GT(max_abs_diff(forward, backward), 0.1);
  EXPECT_EQ(forward, mueller_pbs() * mueller_qwp(pi / 8));
}

TEST(Compose, EmptyIsInvalidScene) {
  try {
    (void)compose(std::span<const MuellerMatrix>{});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_scene);
  }
}

TEST(Apply, IdentityLeavesVectorUnchanged) {
  const StokesVector s{1, 0.2, -0.3, 0.4};
  EXPECT_EQ(apply(MuellerMatrix::identity(), s), s);
}

TEST(Apply, MatchesNaiveLoop) {
  for (int t = 0; t < 100; ++t) {
    MuellerMatrix m;
    oracle::Mat4 ref{};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) ref[i][j] = m.m[i][j] = uniform(-1, 1);
    const StokesVector s{uniform(0, 2), uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)};
    const auto got = apply(m, s);
    const auto want = oracle::matvec(ref, oracle::vec(s));
    expect_stokes(got, want[0], want[1], want[2], want[3], 1e-15);
  }
}

// --- inversion ---------------------------------------------------------------

TEST(InvertRetarder, Identity) {
  EXPECT_EQ(invert_retarder(MuellerMatrix::identity()), MuellerMatrix::identity());
}

TEST(InvertRetarder, UndoesRandomTriple) {
  for (int i = 0; i < 200; ++i) {
    const auto m = mueller_lcvr_triple(uniform(0, 7), uniform(0, 7), uniform(0, 7));
    EXPECT_LT(max_abs_diff(invert_retarder(m) * m, MuellerMatrix::identity()), 1e-12);
  }
}

TEST(InvertRetarder, HalfWavePlateIsInvolution) {
  for (double phi : {0.0, 0.2, pi / 8, 1.3})
    EXPECT_LT(max_abs_diff(invert_retarder(mueller_hwp(phi)), mueller_hwp(phi)), 1e-15);
}

TEST(InvertRetarder, RejectsNonRetarder) {
  EXPECT_THROW((void)invert_retarder(mueller_pbs()), Error);
  try {
    (void)invert_retarder(mueller_pbs());
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::structural);
  }
}

// --- figures of merit --------------------------------------------------------

TEST(Fidelity, Examples) {
  EXPECT_DOUBLE_EQ(fidelity(states::R, states::R), 1.0);
  EXPECT_DOUBLE_EQ(fidelity(states::H, states::V), 0.0);
  EXPECT_DOUBLE_EQ(fidelity(states::H, states::D), 0.5);
}

TEST(Fidelity, RejectsUnnormalizedInput) {
  try {
    (void)fidelity({2, 0, 0}, states::H);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::not_normalized);
  }
}

TEST(Fidelity, SymmetricAndBounded) {
  for (int i = 0; i < 2000; ++i) {
    const auto a = oracle::unit(oracle::random_unit(rng()));
    const auto b = oracle::unit(oracle::random_unit(rng()));
    const double ab = fidelity(a, b), ba = fidelity(b, a);
    EXPECT_EQ(ab, ba);
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
  }
}

TEST(DegreeOfPolarization, Examples) {
  EXPECT_DOUBLE_EQ(degree_of_polarization({1, 1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(degree_of_polarization({1, 0, 0, 0}), 0.0);
  EXPECT_NEAR(degree_of_polarization({1, 0.3, 0.4, 0.5}), std::sqrt(0.5), 1e-15);
  EXPECT_THROW((void)degree_of_polarization({0, 0, 0, 0}), Error);
  EXPECT_THROW((void)degree_of_polarization({-1, 0, 0, 0}), Error);
}

TEST(Normalize, Examples) {
  EXPECT_EQ(normalize(StokesVector{2, 2, 0, 0}), (NormalizedStokes{1, 0, 0}));
  const auto a = normalize(StokesVector{1, 0.6, 0, 0.8});
  const auto b = normalize(StokesVector{5, 3, 0, 4});
  EXPECT_NEAR(a.u1, 0.6, 1e-15);
  EXPECT_NEAR(a.u3, 0.8, 1e-15);
  EXPECT_NEAR(b.u1, 0.6, 1e-15);
  EXPECT_NEAR(b.u3, 0.8, 1e-15);
}

TEST(Normalize, DividesByPolarizedNormNotIntensity) {
  const auto u = normalize(StokesVector{10, 0, 1, 0});
  EXPECT_DOUBLE_EQ(u.u2, 1.0);
}

TEST(Normalize, ZeroPolarizationIsDegenerate) {
  try {
    (void)normalize(StokesVector{1, 0, 0, 0});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degenerate_state);
  }
}

TEST(Normalize, ScaleInvariant) {
  for (int i = 0; i < 500; ++i) {
    const StokesVector s{uniform(0.5, 2), uniform(-0.5, 0.5), uniform(-0.5, 0.5), uniform(-0.5, 0.5)};
    const double k = std::exp(uniform(-10, 10));
    const auto a = normalize(s), b = normalize(s.scaled(k));
    EXPECT_NEAR(a.u1, b.u1, 1e-12);
    EXPECT_NEAR(a.u2, b.u2, 1e-12);
    EXPECT_NEAR(a.u3, b.u3, 1e-12);
  }
}

// --- invariants ----------------------------------------------------------------

TEST(Invariants, RetardersPreserveDegreeOfPolarization) {
  for (int i = 0; i < 500; ++i) {
    const double p = uniform(0, 1);
    const auto u = oracle::random_unit(rng());
    const StokesVector s{1.0, p * u[1], p * u[2], p * u[3]};
    const std::vector<MuellerMatrix> elements{mueller_qwp(uniform(0, pi)), mueller_hwp(uniform(0, pi)),
                                              mueller_lcvr(uniform(0, pi), uniform(0, 7)),
                                              mueller_lcvr_triple(uniform(0, 7), uniform(0, 7), uniform(0, 7))};
    for (const auto& m : elements)
      EXPECT_NEAR(degree_of_polarization(apply(m, s)), degree_of_polarization(s), 1e-9);
  }
}

TEST(Invariants, RetarderBlocksAreProperRotations) {
  for (int i = 0; i < 500; ++i) {
    const std::vector<MuellerMatrix> elements{mueller_qwp(uniform(0, pi)), mueller_hwp(uniform(0, pi)),
                                              mueller_lcvr(uniform(0, pi), uniform(0, 7)),
                                              mueller_lcvr_triple(uniform(0, 7), uniform(0, 7), uniform(0, 7))};
    for (const auto& m : elements) {
      EXPECT_TRUE(is_retarder(m, 1e-12));
      EXPECT_NEAR(determinant(m.rotation_block()), 1.0, 1e-12);
    }
  }
}

TEST(Invariants, PbsOutputIsHorizontal) {
  for (int i = 0; i < 1000; ++i) {
    const StokesVector s{uniform(1, 2), uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)};
    const auto out = apply(mueller_pbs(), s);
    EXPECT_EQ(out.s1, out.s0);
    EXPECT_EQ(out.s2, 0.0);
    EXPECT_EQ(out.s3, 0.0);
  }
}

TEST(StokesVector, PhysicalityBound) {
  EXPECT_TRUE((StokesVector{1, 1, 0, 0}.is_physical()));
  EXPECT_TRUE((StokesVector{1, 0.3, 0.4, 0.5}.is_physical()));
  EXPECT_FALSE((StokesVector{1, 1, 0.1, 0}.is_physical()));
  EXPECT_FALSE((StokesVector{-1, 0, 0, 0}.is_physical()));
}

TEST(States, CardinalStatesAreUnitAndPaired) {
  for (const auto& s : states::cardinal) EXPECT_TRUE(s.is_unit());
  EXPECT_DOUBLE_EQ(fidelity(states::D, states::A), 0.0);
  EXPECT_DOUBLE_EQ(fidelity(states::R, states::L), 0.0);
}
