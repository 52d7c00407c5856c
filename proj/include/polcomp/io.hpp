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

// File formats. Angles are degrees on disk and radians in memory.
//
//   scan   CSV  angle_deg,voltage_v                 + JSON {background_voltage_v, offset_alpha_deg}
//   sweep  CSV  drive_voltage_rms_v,mean_pd_voltage_v,pd_voltage_sem_v
//                                                   + JSON {background_voltage_v, background_sem_v}
//   curve  CSV  drive_voltage_rms_v,retardance_rad,retardance_error_rad
//                                                   + JSON {wavelength_nm, voltage_step_v}
//
// A sidecar lives next to its CSV with the extension replaced by ".json".

#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "polcomp/bench.hpp"
#include "polcomp/compensation.hpp"
#include "polcomp/error.hpp"
#include "polcomp/lcvr.hpp"
#include "polcomp/polarimetry.hpp"
#include "polcomp/stokes.hpp"

namespace polcomp::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

[[nodiscard]] inline fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".json");
  return p;
}

/// Shortest round-trip decimal representation.
[[nodiscard]] inline std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

[[nodiscard]] inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a temporary sibling and renames it over `path`.
inline void write_text_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error(ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorKind::io, "cannot rename onto " + path.string() + ": " + ec.message());
  }
}

[[nodiscard]] inline json read_json(const fs::path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::io, path.string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) { write_text_atomic(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// CSV

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

/// Numeric CSV with a fixed header. Empty cells become std::nullopt.
struct CsvTable {
  std::vector<std::vector<std::optional<double>>> rows;
  std::vector<int> line_numbers;  // 1-based source line of each row
};

[[nodiscard]] inline CsvTable read_csv(const fs::path& path, const std::vector<std::string>& header) {
  const std::string text = read_text(path);
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  CsvTable table;
  const std::string name = path.string();
  while (std::getline(in, line)) {
    ++line_no;
    if (in.eof() && !detail::trim(line).empty() && !text.empty() && text.back() != '\n')
      throw Error(ErrorKind::io, name + ":" + std::to_string(line_no) + ": truncated row (no line terminator)");
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line);
    if (!header_seen) {
      bool ok = cells.size() == header.size();
      for (std::size_t i = 0; ok && i < header.size(); ++i) ok = cells[i] == header[i];
      if (!ok) {
        std::string expected;
        for (const auto& h : header) expected += (expected.empty() ? "" : ",") + h;
        throw Error(ErrorKind::io, name + ":" + std::to_string(line_no) + ": expected header '" + expected + "'");
      }
      header_seen = true;
      continue;
    }
    if (cells.size() != header.size())
      throw Error(ErrorKind::io, name + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(header.size()) + " columns, found " +
                                     std::to_string(cells.size()));
    std::vector<std::optional<double>> row;
    for (std::size_t c = 0; c < cells.size(); ++c) {
      if (cells[c].empty()) {
        row.emplace_back();
        continue;
      }
      double value = 0.0;
      const auto* first = cells[c].data();
      const auto* last = first + cells[c].size();
      const auto res = std::from_chars(first, last, value);
      if (res.ec != std::errc() || res.ptr != last || !std::isfinite(value))
        throw Error(ErrorKind::io, name + ":" + std::to_string(line_no) + ": column '" + header[c] +
                                       "' is not a number: '" + std::string(cells[c]) + "'");
      row.emplace_back(value);
    }
    table.rows.push_back(std::move(row));
    table.line_numbers.push_back(line_no);
  }
  if (!header_seen) throw Error(ErrorKind::io, name + ": empty file");
  return table;
}

[[nodiscard]] inline double required(const CsvTable& t, std::size_t row, std::size_t col, const fs::path& path,
                                     std::string_view column) {
  if (!t.rows[row][col])
    throw Error(ErrorKind::io, path.string() + ":" + std::to_string(t.line_numbers[row]) + ": column '" +
                                   std::string(column) + "' is empty");
  return *t.rows[row][col];
}

[[nodiscard]] inline double json_number(const json& j, const char* key, const fs::path& path) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_number())
    throw Error(ErrorKind::io, path.string() + ": missing numeric field '" + key + "'");
  return j[key].get<double>();
}

// ---------------------------------------------------------------------------
// Scans

inline const std::vector<std::string> scan_header{"angle_deg", "voltage_v"};

[[nodiscard]] inline PolarimeterScan read_scan(const fs::path& csv, std::optional<fs::path> meta = {}) {
  const fs::path meta_path = meta ? *meta : sidecar_path(csv);
  if (!fs::exists(meta_path)) throw Error(ErrorKind::io, "missing scan sidecar " + meta_path.string());
  const json m = read_json(meta_path);
  PolarimeterScan scan;
  scan.background_voltage = json_number(m, "background_voltage_v", meta_path);
  scan.offset_alpha = deg_to_rad(json_number(m, "offset_alpha_deg", meta_path));
  const CsvTable t = read_csv(csv, scan_header);
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    scan.samples.push_back({deg_to_rad(required(t, r, 0, csv, "angle_deg")), required(t, r, 1, csv, "voltage_v")});
  scan.validate();
  return scan;
}

inline void write_scan(const PolarimeterScan& scan, const fs::path& csv) {
  std::string out = "angle_deg,voltage_v\n";
  for (const auto& s : scan.samples)
    out += format_number(rad_to_deg(s.angle_measured)) + "," + format_number(s.detector_voltage) + "\n";
  write_text_atomic(csv, out);
  write_json(sidecar_path(csv), json{{"background_voltage_v", scan.background_voltage},
                                     {"offset_alpha_deg", rad_to_deg(scan.offset_alpha)}});
}

// ---------------------------------------------------------------------------
// Sweeps

inline const std::vector<std::string> sweep_header{"drive_voltage_rms_v", "mean_pd_voltage_v", "pd_voltage_sem_v"};

[[nodiscard]] inline CharacterizationSweep read_sweep(const fs::path& csv, std::optional<fs::path> meta = {}) {
  const fs::path meta_path = meta ? *meta : sidecar_path(csv);
  if (!fs::exists(meta_path)) throw Error(ErrorKind::io, "missing sweep sidecar " + meta_path.string());
  const json m = read_json(meta_path);
  CharacterizationSweep sweep;
  sweep.background_voltage = json_number(m, "background_voltage_v", meta_path);
  sweep.background_sem = json_number(m, "background_sem_v", meta_path);
  const CsvTable t = read_csv(csv, sweep_header);
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    sweep.points.push_back({required(t, r, 0, csv, sweep_header[0]), required(t, r, 1, csv, sweep_header[1]),
                            required(t, r, 2, csv, sweep_header[2])});
  sweep.validate();
  return sweep;
}

inline void write_sweep(const CharacterizationSweep& sweep, const fs::path& csv) {
  std::string out = "drive_voltage_rms_v,mean_pd_voltage_v,pd_voltage_sem_v\n";
  for (const auto& p : sweep.points)
    out += format_number(p.drive_voltage_rms) + "," + format_number(p.mean_pd_voltage) + "," +
           format_number(p.pd_voltage_sem) + "\n";
  write_text_atomic(csv, out);
  write_json(sidecar_path(csv), json{{"background_voltage_v", sweep.background_voltage},
                                     {"background_sem_v", sweep.background_sem}});
}

// ---------------------------------------------------------------------------
// Curves

inline const std::vector<std::string> curve_header{"drive_voltage_rms_v", "retardance_rad", "retardance_error_rad"};

[[nodiscard]] inline RetardanceCurve read_curve(const fs::path& csv, std::optional<fs::path> meta = {}) {
  const fs::path meta_path = meta ? *meta : sidecar_path(csv);
  if (!fs::exists(meta_path)) throw Error(ErrorKind::io, "missing curve metadata " + meta_path.string());
  const json m = read_json(meta_path);
  RetardanceCurve curve;
  curve.wavelength_nm = json_number(m, "wavelength_nm", meta_path);
  curve.voltage_step_v = json_number(m, "voltage_step_v", meta_path);
  if (m.contains("fold_count") && m["fold_count"].is_number_integer()) curve.fold_count = m["fold_count"].get<int>();
  const CsvTable t = read_csv(csv, curve_header);
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    curve.points.push_back(
        {required(t, r, 0, csv, curve_header[0]), required(t, r, 1, csv, curve_header[1]), t.rows[r][2], false});
  curve.validate();
  return curve;
}

inline void write_curve(const RetardanceCurve& curve, const fs::path& csv, const json& extra_meta = json::object()) {
  std::string out = "drive_voltage_rms_v,retardance_rad,retardance_error_rad\n";
  for (const auto& p : curve.points)
    out += format_number(p.drive_voltage_rms) + "," + format_number(p.retardance) + "," +
           (p.retardance_error ? format_number(*p.retardance_error) : std::string()) + "\n";
  write_text_atomic(csv, out);
  json meta{{"wavelength_nm", curve.wavelength_nm},
            {"voltage_step_v", curve.voltage_step_v},
            {"fold_count", curve.fold_count}};
  meta.update(extra_meta);
  write_json(sidecar_path(csv), meta);
}

// ---------------------------------------------------------------------------
// JSON records

[[nodiscard]] inline json to_json(const TomographyResult& r) {
  return json{{"stokes", {r.stokes.s0, r.stokes.s1, r.stokes.s2, r.stokes.s3}},
              {"normalized", {r.normalized.u1, r.normalized.u2, r.normalized.u3}},
              {"dop", r.dop},
              {"fourier", {{"a0", r.fourier.a0}, {"b0", r.fourier.b0}, {"c0", r.fourier.c0}, {"d0", r.fourier.d0}}}};
}

inline json optional_json(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }
inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

/// One run-log line.
[[nodiscard]] inline json to_json(const StepRecord& s) {
  const auto& st = s.state;
  json j{{"step", s.step},
         {"phase", std::string(to_string(s.phase))},
         {"d1_rad", st.retardances.d1},
         {"d2_rad", st.retardances.d2},
         {"d3_rad", st.retardances.d3},
         {"d4_rad", optional_json(st.fourth_retardance)}};
  for (std::size_t i = 0; i < 4; ++i)
    j["v" + std::to_string(i + 1)] = i < st.voltages.count ? json(st.voltages.v[i]) : json(nullptr);
  j["fidelity"] = s.fidelity;
  j["stokes"] = {s.measured.u1, s.measured.u2, s.measured.u3};
  j["best_fidelity"] = s.best_fidelity;
  j["accepted"] = s.accepted;
  return j;
}

[[nodiscard]] inline json summary_json(const Milestones& m, Termination t) {
  return json{{"steps_to_97", optional_json(m.steps_to_97)},
              {"steps_to_99", optional_json(m.steps_to_99)},
              {"steps_to_995", optional_json(m.steps_to_995)},
              {"reason", std::string(to_string(t))}};
}

/// JSON lines: one record per step, then the summary record.
[[nodiscard]] inline std::string run_log(const std::vector<StepRecord>& steps, const Milestones& m, Termination t) {
  std::string out;
  for (const auto& s : steps) out += to_json(s).dump() + "\n";
  out += summary_json(m, t).dump() + "\n";
  return out;
}

[[nodiscard]] inline json to_json(const TrialStats& stats) {
  json trials = json::array();
  for (const auto& t : stats.trials)
    trials.push_back({{"seed", t.seed},
                      {"steps_to_97", optional_json(t.milestones.steps_to_97)},
                      {"steps_to_99", optional_json(t.milestones.steps_to_99)},
                      {"steps_to_995", optional_json(t.milestones.steps_to_995)},
                      {"total_steps", t.total_steps},
                      {"modeled_time_s", t.modeled_time_s},
                      {"reason", std::string(to_string(t.termination))}});
  return json{{"trials", trials},
              {"mean_steps_to_97", optional_json(stats.mean_steps_to_97)},
              {"mean_steps_to_99", optional_json(stats.mean_steps_to_99)},
              {"mean_steps_to_995", optional_json(stats.mean_steps_to_995)},
              {"unreached",
               {{"steps_to_97", stats.unreached_97},
                {"steps_to_99", stats.unreached_99},
                {"steps_to_995", stats.unreached_995}}}};
}

/// Per-step fidelity traces of all trials, one row per measurement.
[[nodiscard]] inline std::string trace_csv(const TrialStats& stats) {
  std::string out = "trial,seed,step,phase,fidelity,infidelity,best_fidelity,accepted\n";
  for (std::size_t i = 0; i < stats.trials.size(); ++i) {
    const auto& t = stats.trials[i];
    for (const auto& s : t.steps)
      out += std::to_string(i) + "," + std::to_string(t.seed) + "," + std::to_string(s.step) + "," +
             std::string(to_string(s.phase)) + "," + format_number(s.fidelity) + "," +
             format_number(1.0 - s.fidelity) + "," + format_number(s.best_fidelity) + "," +
             (s.accepted ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace polcomp::io
