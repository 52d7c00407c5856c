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

#include <filesystem>
#include <fstream>
#include <string>

#include "oracles.hpp"
#include "polcomp/bench.hpp"
#include "polcomp/io.hpp"

using namespace polcomp;
namespace fs = std::filesystem;

namespace {

const fs::path fixtures{POLCOMP_FIXTURE_DIR};

void put(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string error_text(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Paths, SidecarReplacesExtension) {
  EXPECT_EQ(io::sidecar_path("a/b/scan.csv"), fs::path("a/b/scan.json"));
  EXPECT_EQ(io::sidecar_path("scan"), fs::path("scan.json"));
}

TEST(Numbers, ShortestRoundTrip) {
  for (double x : {0.1, 1.0 / 3.0, 1e-300, -2.5, 6.283185307179586}) EXPECT_EQ(std::stod(io::format_number(x)), x);
  EXPECT_EQ(io::format_number(0.5), "0.5");
}

TEST(Fixtures, SweepLoads) {
  const auto s = io::read_sweep(fixtures / "sweep_lcvr0.csv");
  EXPECT_EQ(s.points.size(), 1591u);
  EXPECT_DOUBLE_EQ(s.points.front().drive_voltage_rms, 0.1);
  EXPECT_DOUBLE_EQ(s.points.back().drive_voltage_rms, 16.0);
  EXPECT_NEAR(s.background_voltage, 0.009434628479886745, 1e-18);
}

TEST(Fixtures, TruncatedFileNamesTheLine) {
  const auto msg = error_text([] { (void)io::read_sweep(fixtures / "sweep_truncated.csv"); });
  EXPECT_NE(msg.find("truncated row"), std::string::npos) << msg;
  EXPECT_NE(msg.find("sweep_truncated.csv:"), std::string::npos) << msg;
}

TEST(Fixtures, ScanLoads) {
  const auto s = io::read_scan(fixtures / "scan_H.csv");
  EXPECT_EQ(s.samples.size(), 310u);
  EXPECT_DOUBLE_EQ(s.samples.front().detector_voltage, 1.0);
  EXPECT_NEAR(s.samples[1].angle_measured, two_pi / 310.0, 1e-15);
}

TEST(RoundTrip, Scan) {
  oracle::TempDir dir("io_scan");
  auto noise = NoiseModel::lab();
  const auto scan = simulate_scan({1, 0.2, 0.3, 0.9}, 310, two_pi / 310.0, 0.01, noise, 5);
  io::write_scan(scan, dir.path / "s.csv");
  const auto back = io::read_scan(dir.path / "s.csv");
  ASSERT_EQ(back.samples.size(), scan.samples.size());
  for (std::size_t i = 0; i < scan.samples.size(); ++i) {
    EXPECT_NEAR(back.samples[i].angle_measured, scan.samples[i].angle_measured, 1e-14);
    EXPECT_EQ(back.samples[i].detector_voltage, scan.samples[i].detector_voltage);
  }
  EXPECT_EQ(back.background_voltage, scan.background_voltage);
  EXPECT_NEAR(back.offset_alpha, scan.offset_alpha, 1e-15);
}

TEST(RoundTrip, Sweep) {
  oracle::TempDir dir("io_sweep");
  SweepNoise noise;
  noise.pd_sigma = 0.01;
  const auto sweep = simulate_sweep(LcvrModel{}, noise, 6);
  io::write_sweep(sweep, dir.path / "w.csv");
  const auto back = io::read_sweep(dir.path / "w.csv");
  ASSERT_EQ(back.points.size(), sweep.points.size());
  for (std::size_t i = 0; i < sweep.points.size(); ++i) {
    EXPECT_EQ(back.points[i].drive_voltage_rms, sweep.points[i].drive_voltage_rms);
    EXPECT_EQ(back.points[i].mean_pd_voltage, sweep.points[i].mean_pd_voltage);
    EXPECT_EQ(back.points[i].pd_voltage_sem, sweep.points[i].pd_voltage_sem);
  }
  EXPECT_EQ(back.background_voltage, sweep.background_voltage);
  EXPECT_EQ(back.background_sem, sweep.background_sem);
}

TEST(RoundTrip, CurveKeepsMissingErrors) {
  oracle::TempDir dir("io_curve");
  auto curve = LcvrModel{}.curve();
  curve.points[3].retardance_error = 0.02;
  io::write_curve(curve, dir.path / "c.csv", {{"source", "unit"}});
  const auto back = io::read_curve(dir.path / "c.csv");
  ASSERT_EQ(back.points.size(), curve.points.size());
  EXPECT_EQ(back.points[3].retardance_error, 0.02);
  EXPECT_FALSE(back.points[4].retardance_error.has_value());
  EXPECT_EQ(back.points[100].retardance, curve.points[100].retardance);
  EXPECT_EQ(back.fold_count, curve.fold_count);
  EXPECT_EQ(back.wavelength_nm, curve.wavelength_nm);
  EXPECT_EQ(io::read_json(dir.path / "c.json").at("source"), "unit");
}

TEST(Diagnostics, WrongHeader) {
  oracle::TempDir dir("io_header");
  put(dir.path / "a.csv", "volts,angle\n1,2\n");
  put(dir.path / "a.json", R"({"background_voltage_v": 0, "offset_alpha_deg": 0})");
  const auto msg = error_text([&] { (void)io::read_scan(dir.path / "a.csv"); });
  EXPECT_NE(msg.find("a.csv:1: expected header 'angle_deg,voltage_v'"), std::string::npos) << msg;
}

TEST(Diagnostics, BadNumberNamesColumnAndLine) {
  oracle::TempDir dir("io_number");
  put(dir.path / "a.csv", "drive_voltage_rms_v,mean_pd_voltage_v,pd_voltage_sem_v\n0.1,0.2,0.01\n0.2,abc,0.01\n");
  put(dir.path / "a.json", R"({"background_voltage_v": 0, "background_sem_v": 0})");
  const auto msg = error_text([&] { (void)io::read_sweep(dir.path / "a.csv"); });
  EXPECT_NE(msg.find("a.csv:3: column 'mean_pd_voltage_v' is not a number: 'abc'"), std::string::npos) << msg;
}

TEST(Diagnostics, ColumnCount) {
  oracle::TempDir dir("io_columns");
  put(dir.path / "a.csv", "angle_deg,voltage_v\n0,1,2\n");
  const auto msg = error_text([&] { (void)io::read_csv(dir.path / "a.csv", io::scan_header); });
  EXPECT_NE(msg.find(":2: expected 2 columns, found 3"), std::string::npos) << msg;
}

TEST(Diagnostics, MissingSidecarAndField) {
  oracle::TempDir dir("io_sidecar");
  put(dir.path / "a.csv", "angle_deg,voltage_v\n0,1\n");
  auto msg = error_text([&] { (void)io::read_scan(dir.path / "a.csv"); });
  EXPECT_NE(msg.find("missing scan sidecar"), std::string::npos) << msg;
  put(dir.path / "a.json", R"({"background_voltage_v": 0})");
  msg = error_text([&] { (void)io::read_scan(dir.path / "a.csv"); });
  EXPECT_NE(msg.find("offset_alpha_deg"), std::string::npos) << msg;
}

TEST(Diagnostics, EmptyAndUnreadable) {
  oracle::TempDir dir("io_empty");
  put(dir.path / "a.csv", "");
  EXPECT_NE(error_text([&] { (void)io::read_csv(dir.path / "a.csv", io::scan_header); }).find("empty file"),
            std::string::npos);
  EXPECT_NE(error_text([&] { (void)io::read_text(dir.path / "nope.csv"); }).find("cannot open"), std::string::npos);
}

TEST(Diagnostics, CrLfIsAccepted) {
  oracle::TempDir dir("io_crlf");
  put(dir.path / "a.csv", "angle_deg,voltage_v\r\n0,1\r\n1,2\r\n");
  const auto t = io::read_csv(dir.path / "a.csv", io::scan_header);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][1], 2.0);
  EXPECT_EQ(t.line_numbers[1], 3);
}

TEST(AtomicWrite, ReplacesWholeFileAndLeavesNoTemp) {
  oracle::TempDir dir("io_atomic");
  const auto p = dir.path / "sub" / "out.json";
  io::write_text_atomic(p, "first version, rather long\n");
  io::write_text_atomic(p, "second\n");
  EXPECT_EQ(io::read_text(p), "second\n");
  for (const auto& e : fs::directory_iterator(p.parent_path())) EXPECT_EQ(e.path().filename(), "out.json");
}

TEST(Records, StepAndSummary) {
  StepRecord s;
  s.step = 3;
  s.phase = Phase::fine;
  s.state.voltages.count = 3;
  s.state.voltages.v = {1, 2, 3, 0};
  s.fidelity = 0.99;
  const auto j = io::to_json(s);
  EXPECT_EQ(j.at("phase"), "fine");
  EXPECT_TRUE(j.at("v4").is_null());
  EXPECT_TRUE(j.at("d4_rad").is_null());
  EXPECT_EQ(j.at("v2"), 2.0);

  Milestones m;
  m.steps_to_97 = 1;
  const auto summary = io::summary_json(m, Termination::budget_exhausted);
  EXPECT_EQ(summary.at("reason"), "budget_exhausted");
  EXPECT_TRUE(summary.at("steps_to_995").is_null());

  const auto log = io::run_log({s, s}, m, Termination::completed);
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 3);
}

TEST(Records, StatsAndTrace) {
  const auto stats = run_trials(3, LoopConfig{}, NoiseModel::none(), 4);
  const auto j = io::to_json(stats);
  EXPECT_EQ(j.at("trials").size(), 3u);
  EXPECT_EQ(j.at("mean_steps_to_995"), 1.0);
  EXPECT_EQ(j.at("unreached").at("steps_to_995"), 0);
  const auto trace = io::trace_csv(stats);
  EXPECT_EQ(trace.substr(0, trace.find('\n')), "trial,seed,step,phase,fidelity,infidelity,best_fidelity,accepted");
  EXPECT_EQ(std::count(trace.begin(), trace.end(), '\n'), 1 + 3 * 2);
}
