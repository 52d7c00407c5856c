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

// Command-line front end. Every command writes a manifest next to its primary
// output; `polcomp rerun <manifest>` replays it.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "polcomp/bench.hpp"
#include "polcomp/compensation.hpp"
#include "polcomp/error.hpp"
#include "polcomp/io.hpp"
#include "polcomp/lcvr.hpp"
#include "polcomp/noise.hpp"
#include "polcomp/polarimetry.hpp"
#include "polcomp/stokes.hpp"

namespace polcomp::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline constexpr const char* version = "0.1.0";
inline constexpr const char* output_dir_env = "POLCOMP_OUT_DIR";

enum ExitCode : int {
  exit_ok = 0,
  exit_failure = 1,  // unreadable input, invalid data, numerical failure
  exit_usage = 2,
  exit_budget_exhausted = 3,
};

/// A command-line value that the library rejected.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Runs f, reporting library argument errors as usage errors.
template <class F>
auto from_flags(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

/// Refuses to overwrite one of the command's inputs.
inline void check_distinct(const std::vector<std::filesystem::path>& inputs,
                           const std::vector<std::filesystem::path>& outputs) {
  for (const auto& o : outputs)
    for (const auto& i : inputs)
      if (std::filesystem::weakly_canonical(o) == std::filesystem::weakly_canonical(i))
        throw UsageError("output " + o.string() + " would overwrite input " + i.string());
}

/// "H", "V", "D", "A", "R", "L" or "u1,u2,u3" (normalized on parse).
[[nodiscard]] inline NormalizedStokes parse_state(const std::string& text) {
  for (std::size_t i = 0; i < states::cardinal.size(); ++i)
    if (text.size() == 1 && text[0] == states::cardinal_names[i]) return states::cardinal[i];
  std::vector<double> parts;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = std::min(text.find(',', start), text.size());
    const std::string cell = text.substr(start, comma - start);
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(cell, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != cell.size()) throw Error(ErrorKind::invalid_argument, "bad state '" + text + "'");
    parts.push_back(x);
    start = comma + 1;
  }
  if (parts.size() != 3) throw Error(ErrorKind::invalid_argument, "state needs three components: '" + text + "'");
  return normalize(NormalizedStokes{parts[0], parts[1], parts[2]});
}

[[nodiscard]] inline json to_json(const LoopConfig& c) {
  return json{{"coarse_threshold", c.coarse_threshold}, {"fine_threshold", c.fine_threshold},
              {"max_coarse_steps", c.max_coarse_steps}, {"max_fine_steps", c.max_fine_steps},
              {"max_total_steps", c.max_total_steps},   {"fine_step_v", c.fine_step_v},
              {"fine_step_rad", c.fine_step_rad},       {"multistart_count", c.multistart_count},
              {"solver_tolerance", c.solver_tolerance}};
}

[[nodiscard]] inline json to_json(const NoiseModel& n) {
  return json{{"pd_sigma_v", n.pd_sigma},
              {"background_v", n.background_v},
              {"angle_jitter_sigma_deg", rad_to_deg(n.angle_jitter_sigma)},
              {"homing_sigma_deg", rad_to_deg(n.homing_sigma)},
              {"voltage_quantum_v", n.voltage_quantum_v},
              {"retardance_curve_error_rad", n.retardance_curve_error},
              {"detector_gain", n.detector_gain}};
}

/// Resolves a relative output path against $POLCOMP_OUT_DIR when set.
[[nodiscard]] inline fs::path output_path(const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) {
    if (const char* dir = std::getenv(output_dir_env); dir && *dir) return fs::path(dir) / path;
  }
  return path;
}

[[nodiscard]] inline fs::path manifest_path(const fs::path& primary) {
  fs::path m = primary;
  m += ".manifest.json";
  return m;
}

/// ISO-8601 UTC; honours SOURCE_DATE_EPOCH for reproducible manifests.
[[nodiscard]] inline std::string timestamp() {
  std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch && *epoch) t = std::strtoll(epoch, nullptr, 10);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// State shared by one invocation.
struct Invocation {
  std::vector<std::string> args;  // everything after the program name
  std::ostream& out;
  std::ostream& err;
};

struct Manifest {
  std::string command;
  json config = json::object();
  json seeds = json::object();
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
};

inline void write_manifest(const Invocation& inv, const fs::path& primary, const Manifest& m) {
  json inputs = json::array(), outputs = json::array();
  for (const auto& p : m.inputs) inputs.push_back(p.string());
  for (const auto& p : m.outputs) outputs.push_back(p.string());
  const char* dir = std::getenv(output_dir_env);
  json j{{"command", m.command},
         {"args", inv.args},
         {"working_directory", fs::current_path().string()},
         {"output_dir", dir ? json(dir) : json(nullptr)},
         {"config", m.config},
         {"seeds", m.seeds},
         {"inputs", inputs},
         {"outputs", outputs},
         {"version", version},
         {"timestamp", timestamp()}};
  io::write_json(manifest_path(primary), j);
}

[[nodiscard]] inline std::string manifest_ref(const fs::path& primary) {
  return manifest_path(primary).filename().string();
}

// ---------------------------------------------------------------------------
// Commands

struct CharacterizeOptions {
  std::string sweep;
  std::optional<std::string> sweep_meta;
  std::string out = "curve.csv";
  double wavelength_nm = 808.0;
  double fold_threshold = 0.15;
};

inline int cmd_characterize(const Invocation& inv, const CharacterizeOptions& o) {
  const fs::path out = output_path(o.out);
  const fs::path sweep_meta = o.sweep_meta ? fs::path(*o.sweep_meta) : io::sidecar_path(o.sweep);
  check_distinct({o.sweep, sweep_meta}, {out, io::sidecar_path(out)});
  const auto sweep = io::read_sweep(o.sweep, sweep_meta);
  const auto curve = build_curve(sweep, {o.fold_threshold, o.wavelength_nm});
  io::write_curve(curve, out, {{"manifest", manifest_ref(out)}});
  Manifest m{"characterize",
             {{"wavelength_nm", o.wavelength_nm}, {"fold_threshold", o.fold_threshold}},
             json::object(),
             {o.sweep, sweep_meta},
             {out, io::sidecar_path(out)}};
  write_manifest(inv, out, m);
  inv.out << "folds: " << curve.fold_count << "\n"
          << "retardance span: " << io::format_number(curve.span()) << " rad ("
          << io::format_number(curve.min_retardance()) << " .. " << io::format_number(curve.max_retardance())
          << ")\n"
          << "wrote " << out.string() << "\n";
  return exit_ok;
}

struct TomographyOptions {
  std::string input;  // scan CSV or a directory of them
  std::optional<std::string> meta;
  std::optional<std::string> reference;
  std::string out = "tomography.json";
};

inline int cmd_tomography(const Invocation& inv, const TomographyOptions& o) {
  const fs::path out = output_path(o.out);
  const std::optional<NormalizedStokes> reference =
      o.reference ? std::optional(from_flags([&] { return parse_state(*o.reference); })) : std::nullopt;
  Manifest m{"tomography", {{"reference", o.reference ? json(*o.reference) : json(nullptr)}}, json::object(), {}, {out}};

  json result;
  if (fs::is_directory(o.input)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(o.input))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(ErrorKind::io, "no scan files in " + o.input);
    json scans = json::array();
    std::vector<double> fids;
    for (const auto& f : files) {
      const auto r = analyze_scan(io::read_scan(f));
      json row = io::to_json(r);
      row["file"] = f.filename().string();
      if (reference) {
        fids.push_back(fidelity(r.normalized, *reference));
        row["fidelity"] = fids.back();
      }
      scans.push_back(row);
      m.inputs.push_back(f);
      m.inputs.push_back(io::sidecar_path(f));
    }
    check_distinct(m.inputs, {out});
    result = {{"scans", scans}};
    inv.out << "file,fidelity\n";
    for (const auto& s : scans)
      inv.out << s["file"].get<std::string>() << ","
              << (s.contains("fidelity") ? io::format_number(s["fidelity"].get<double>()) : std::string()) << "\n";
    if (!fids.empty()) {
      double mean = 0.0;
      for (double f : fids) mean += f;
      mean /= static_cast<double>(fids.size());
      double var = 0.0;
      for (double f : fids) var += (f - mean) * (f - mean);
      const double n = static_cast<double>(fids.size());
      const double sem = fids.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
      result["fidelity"] = {{"count", fids.size()}, {"mean", mean}, {"sem", sem}};
      inv.out << "mean fidelity: " << io::format_number(mean) << " +- " << io::format_number(sem) << " (n=" << fids.size()
              << ")\n";
    }
  } else {
    const fs::path meta = o.meta ? fs::path(*o.meta) : io::sidecar_path(o.input);
    check_distinct({o.input, meta}, {out});
    const auto r = analyze_scan(io::read_scan(o.input, meta));
    result = io::to_json(r);
    if (reference) result["fidelity"] = fidelity(r.normalized, *reference);
    m.inputs = {o.input, meta};
    inv.out << "normalized: " << io::format_number(r.normalized.u1) << " " << io::format_number(r.normalized.u2)
            << " " << io::format_number(r.normalized.u3) << "\n"
            << "dop: " << io::format_number(r.dop) << "\n";
  }
  result["manifest"] = manifest_ref(out);
  io::write_json(out, result);
  write_manifest(inv, out, m);
  return exit_ok;
}

/// Flags shared by compensate and bench.
struct LoopOptions {
  std::string target = "R";
  std::string noise_preset = "lab";
  std::uint64_t seed = 1;
  std::optional<double> coarse_threshold;
  std::optional<double> fine_threshold;
  std::optional<int> max_steps;

  [[nodiscard]] LoopConfig config() const {
    LoopConfig c;
    if (coarse_threshold) c.coarse_threshold = *coarse_threshold;
    if (fine_threshold) c.fine_threshold = *fine_threshold;
    if (max_steps) c.max_total_steps = *max_steps;
    c.validate();
    return c;
  }
};

[[nodiscard]] inline std::shared_ptr<const CurveSet> load_curves(const std::vector<std::string>& paths) {
  if (paths.empty()) return default_curve_set();
  if (paths.size() < 3 || paths.size() > 4)
    throw Error(ErrorKind::invalid_argument, "need three or four curve files");
  auto set = std::make_shared<CurveSet>();
  for (const auto& p : paths) set->push_back(io::read_curve(p));
  return set;
}

[[nodiscard]] inline std::vector<fs::path> curve_inputs(const std::vector<std::string>& paths) {
  std::vector<fs::path> out;
  for (const auto& p : paths) {
    out.emplace_back(p);
    out.push_back(io::sidecar_path(p));
  }
  return out;
}

struct CompensateOptions {
  std::vector<std::string> curves;
  LoopOptions loop;
  std::string source = "H";
  std::string out = "run.jsonl";
};

inline int cmd_compensate(const Invocation& inv, const CompensateOptions& o) {
  const LoopConfig config = from_flags([&] { return o.loop.config(); });
  const NoiseModel noise = from_flags([&] { return NoiseModel::preset(o.loop.noise_preset); });
  const NormalizedStokes target = from_flags([&] { return parse_state(o.loop.target); });
  const StokesVector source = from_flags([&] { return parse_state(o.source).as_stokes(1.0); });
  const fs::path out = output_path(o.out);
  check_distinct(curve_inputs(o.curves), {out});
  const auto curves = load_curves(o.curves);
  TrialOptions topt;
  topt.target = target;
  topt.source = source;
  topt.curves = curves;
  const TrialRecord trial = run_trial(o.loop.seed, config, noise, topt);

  std::string log;
  for (const auto& s : trial.steps) log += io::to_json(s).dump() + "\n";
  json summary = io::summary_json(trial.milestones, trial.termination);
  summary["total_steps"] = trial.total_steps;
  summary["modeled_time_s"] = trial.modeled_time_s;
  summary["manifest"] = manifest_ref(out);
  log += summary.dump() + "\n";
  io::write_text_atomic(out, log);

  Manifest m{"compensate",
             {{"loop", to_json(config)},
              {"noise_preset", o.loop.noise_preset},
              {"noise", to_json(noise)},
              {"target", o.loop.target},
              {"source", o.source},
              {"curves", o.curves.empty() ? json("builtin") : json(o.curves)}},
             {{"seed", o.loop.seed},
              {"disturbance", mix_seed(o.loop.seed, 1)},
              {"apparatus", mix_seed(o.loop.seed, 2)},
              {"loop", mix_seed(o.loop.seed, 3)}},
             curve_inputs(o.curves),
             {out}};
  write_manifest(inv, out, m);

  auto show = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string("unreached"); };
  inv.out << "steps_to_97: " << show(trial.milestones.steps_to_97) << "\n"
          << "steps_to_99: " << show(trial.milestones.steps_to_99) << "\n"
          << "steps_to_995: " << show(trial.milestones.steps_to_995) << "\n"
          << "reason: " << to_string(trial.termination) << "\n";
  return trial.termination == Termination::budget_exhausted ? exit_budget_exhausted : exit_ok;
}

struct BenchOptions {
  std::size_t trials = 8;
  LoopOptions loop;
  std::vector<std::string> curves;
  unsigned threads = 0;
  std::string out = "bench.json";
  std::optional<std::string> trace;
};

inline int cmd_bench(const Invocation& inv, const BenchOptions& o) {
  if (o.trials < 1) throw UsageError("bench needs at least one trial");
  const LoopConfig config = from_flags([&] { return o.loop.config(); });
  const NoiseModel noise = from_flags([&] { return NoiseModel::preset(o.loop.noise_preset); });
  TrialOptions topt;
  topt.target = from_flags([&] { return parse_state(o.loop.target); });
  topt.threads = o.threads;
  const fs::path out = output_path(o.out);
  fs::path trace;
  if (o.trace) {
    trace = output_path(*o.trace);
  } else {
    trace = out;
    trace.replace_extension(".trace.csv");
  }
  check_distinct(curve_inputs(o.curves), {out, trace});
  topt.curves = load_curves(o.curves);
  const TrialStats stats = run_trials(o.trials, config, noise, o.loop.seed, topt);

  io::write_text_atomic(trace, io::trace_csv(stats));
  json j = io::to_json(stats);
  j["trace_csv"] = trace.filename().string();
  j["manifest"] = manifest_ref(out);
  io::write_json(out, j);

  Manifest m{"bench",
             {{"trials", o.trials},
              {"loop", to_json(config)},
              {"noise_preset", o.loop.noise_preset},
              {"noise", to_json(noise)},
              {"target", o.loop.target},
              {"curves", o.curves.empty() ? json("builtin") : json(o.curves)}},
             {{"base_seed", o.loop.seed}},
             curve_inputs(o.curves),
             {out, trace}};
  write_manifest(inv, out, m);

  auto show = [](const std::optional<double>& v) { return v ? io::format_number(*v) : std::string("n/a"); };
  inv.out << "trials: " << o.trials << "\n"
          << "mean_steps_to_97: " << show(stats.mean_steps_to_97) << " (unreached " << stats.unreached_97 << ")\n"
          << "mean_steps_to_99: " << show(stats.mean_steps_to_99) << " (unreached " << stats.unreached_99 << ")\n"
          << "mean_steps_to_995: " << show(stats.mean_steps_to_995) << " (unreached " << stats.unreached_995
          << ")\n";
  return exit_ok;
}

struct SynthSweepOptions {
  std::size_t lcvr = 0;
  double pd_sigma = 0.005;
  std::optional<double> constant;  // flat detector reading instead of a real cell
  std::uint64_t seed = 1;
  std::string out = "sweep.csv";
};

inline int cmd_synth_sweep(const Invocation& inv, const SynthSweepOptions& o) {
  const auto models = default_lcvr_models();
  if (o.lcvr >= models.size()) throw UsageError("no such LCVR model");
  SweepNoise noise;
  noise.pd_sigma = o.pd_sigma;
  CharacterizationSweep sweep = simulate_sweep(models[o.lcvr], noise, o.seed);
  if (o.constant)
    for (auto& p : sweep.points) p.mean_pd_voltage = *o.constant;
  const fs::path out = output_path(o.out);
  io::write_sweep(sweep, out);
  Manifest m{"synth-sweep",
             {{"lcvr", o.lcvr}, {"pd_sigma_v", o.pd_sigma}, {"constant_v", o.constant ? json(*o.constant) : json(nullptr)}},
             {{"seed", o.seed}},
             {},
             {out, io::sidecar_path(out)}};
  write_manifest(inv, out, m);
  inv.out << "wrote " << out.string() << " (" << sweep.points.size() << " points)\n";
  return exit_ok;
}

struct SynthScanOptions {
  std::string state = "H";
  std::string noise_preset = "none";
  std::uint64_t seed = 1;
  double alpha_deg = 0.0;
  std::size_t count = 1;  // > 1 writes scan_000.csv ... into the output directory
  std::string out = "scan.csv";
};

inline int cmd_synth_scan(const Invocation& inv, const SynthScanOptions& o) {
  const NoiseModel noise = from_flags([&] { return NoiseModel::preset(o.noise_preset); });
  const StokesVector s = from_flags([&] { return parse_state(o.state).as_stokes(1.0); });
  const ScanGeometry g;
  const fs::path out = output_path(o.out);
  Manifest m{"synth-scan",
             {{"state", o.state}, {"noise_preset", o.noise_preset}, {"noise", to_json(noise)},
              {"alpha_deg", o.alpha_deg}, {"count", o.count}, {"samples", g.n_samples}},
             {{"seed", o.seed}},
             {},
             {}};
  fs::path primary = out;
  if (o.count <= 1) {
    io::write_scan(simulate_scan(s, g.n_samples, g.step, deg_to_rad(o.alpha_deg), noise, o.seed), out);
    m.outputs = {out, io::sidecar_path(out)};
  } else {
    // The manifest sits beside the directory, not inside it.
    primary = out.has_filename() ? out : out.parent_path();
    for (std::size_t i = 0; i < o.count; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "scan_%03zu.csv", i);
      const fs::path f = out / name;
      io::write_scan(simulate_scan(s, g.n_samples, g.step, deg_to_rad(o.alpha_deg), noise, mix_seed(o.seed, i)), f);
      m.outputs.push_back(f);
      m.outputs.push_back(io::sidecar_path(f));
    }
  }
  write_manifest(inv, primary, m);
  inv.out << "wrote " << o.count << " scan(s) to " << out.string() << "\n";
  return exit_ok;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Replays a manifest from its recorded working directory and output directory.
inline int cmd_rerun(const std::string& manifest, std::ostream& out, std::ostream& err) {
  const json m = io::read_json(manifest);
  if (!m.contains("args") || !m["args"].is_array()) throw Error(ErrorKind::io, manifest + ": no recorded args");
  const auto args = m["args"].get<std::vector<std::string>>();
  if (!args.empty() && args.front() == "rerun") throw Error(ErrorKind::io, manifest + ": refuses to replay a rerun");

  const fs::path previous_dir = fs::current_path();
  const char* previous_env = std::getenv(output_dir_env);
  const std::optional<std::string> saved_env = previous_env ? std::optional<std::string>(previous_env) : std::nullopt;
  if (m.contains("output_dir") && m["output_dir"].is_string())
    ::setenv(output_dir_env, m["output_dir"].get<std::string>().c_str(), 1);
  else
    ::unsetenv(output_dir_env);
  if (m.contains("working_directory") && m["working_directory"].is_string())
    fs::current_path(m["working_directory"].get<std::string>());

  int code = exit_failure;
  try {
    code = run(args, out, err);
  } catch (...) {
    fs::current_path(previous_dir);
    throw;
  }
  fs::current_path(previous_dir);
  if (saved_env)
    ::setenv(output_dir_env, saved_env->c_str(), 1);
  else
    ::unsetenv(output_dir_env);
  return code;
}

// ---------------------------------------------------------------------------
// Argument parsing

inline void add_loop_flags(CLI::App* cmd, LoopOptions& o) {
  cmd->add_option("--target", o.target, "target state: H|V|D|A|R|L or u1,u2,u3")->capture_default_str();
  cmd->add_option("--noise-preset", o.noise_preset, "noise preset")
      ->check(CLI::IsMember({"none", "lab"}))
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "seed")->capture_default_str();
  cmd->add_option("--coarse-threshold", o.coarse_threshold, "fidelity that ends the coarse phase")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--fine-threshold", o.fine_threshold, "fidelity that ends the run")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--max-steps", o.max_steps, "total step budget")->check(CLI::PositiveNumber);
}

/// Parses and dispatches one command line (without the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fiber polarization compensation with liquid-crystal retarders", "polcomp"};
  app.set_version_flag("--version", version);
  app.require_subcommand(1);

  CharacterizeOptions ch;
  auto* c_char = app.add_subcommand("characterize", "build a retardance curve from an intensity sweep");
  c_char->add_option("sweep", ch.sweep, "sweep CSV")->required();
  c_char->add_option("--sweep-meta", ch.sweep_meta, "sweep sidecar JSON (default: <sweep>.json)");
  c_char->add_option("-o,--out", ch.out, "curve CSV")->capture_default_str();
  c_char->add_option("--wavelength-nm", ch.wavelength_nm, "wavelength")->capture_default_str();
  c_char->add_option("--fold-threshold", ch.fold_threshold, "fold zone width in radians")->capture_default_str();

  TomographyOptions to;
  auto* c_tomo = app.add_subcommand("tomography", "Stokes vector from a rotating-waveplate scan");
  c_tomo->add_option("scan", to.input, "scan CSV, or a directory of scan CSVs")->required();
  c_tomo->add_option("--meta", to.meta, "scan sidecar JSON (single file only)");
  c_tomo->add_option("--reference", to.reference, "reference state for fidelity");
  c_tomo->add_option("-o,--out", to.out, "result JSON")->capture_default_str();

  CompensateOptions co;
  auto* c_comp = app.add_subcommand("compensate", "run the compensation loop on the simulated bench");
  c_comp->add_option("curves", co.curves, "three or four curve CSVs (default: built-in cells)");
  add_loop_flags(c_comp, co.loop);
  c_comp->add_option("--source", co.source, "source state")->capture_default_str();
  c_comp->add_option("-o,--out", co.out, "run log (JSON lines)")->capture_default_str();

  BenchOptions be;
  auto* c_bench = app.add_subcommand("bench", "repeat seeded compensation trials");
  c_bench->add_option("-n,--trials", be.trials, "number of trials (>= 1)")
      ->check(CLI::Range(std::size_t{1}, std::numeric_limits<std::size_t>::max()))->capture_default_str();
  add_loop_flags(c_bench, be.loop);
  c_bench->add_option("--curve", be.curves, "curve CSV, repeat three or four times (default: built-in cells)");
  c_bench->add_option("--threads", be.threads, "worker threads, 0 for all cores")->capture_default_str();
  c_bench->add_option("-o,--out", be.out, "stats JSON")->capture_default_str();
  c_bench->add_option("--trace", be.trace, "per-step fidelity CSV (default: <out>.trace.csv)");

  SynthSweepOptions ss;
  auto* c_ss = app.add_subcommand("synth-sweep", "write a synthetic characterization sweep");
  c_ss->add_option("--lcvr", ss.lcvr, "built-in cell index 0-3")->capture_default_str();
  c_ss->add_option("--pd-sigma", ss.pd_sigma, "detector noise per sample, volts")->capture_default_str();
  c_ss->add_option("--constant", ss.constant, "replace the readings with a constant voltage");
  c_ss->add_option("--seed", ss.seed, "seed")->capture_default_str();
  c_ss->add_option("-o,--out", ss.out, "sweep CSV")->capture_default_str();

  SynthScanOptions sc;
  auto* c_sc = app.add_subcommand("synth-scan", "write synthetic tomography scans");
  c_sc->add_option("--state", sc.state, "input state")->capture_default_str();
  c_sc->add_option("--noise-preset", sc.noise_preset, "noise preset")
      ->check(CLI::IsMember({"none", "lab"}))
      ->capture_default_str();
  c_sc->add_option("--seed", sc.seed, "seed")->capture_default_str();
  c_sc->add_option("--alpha-deg", sc.alpha_deg, "waveplate offset")->capture_default_str();
  c_sc->add_option("--count", sc.count, "number of scans")->check(CLI::PositiveNumber)->capture_default_str();
  c_sc->add_option("-o,--out", sc.out, "scan CSV, or directory when --count > 1")->capture_default_str();

  std::string manifest;
  auto* c_rerun = app.add_subcommand("rerun", "replay a manifest");
  c_rerun->add_option("manifest", manifest, "manifest JSON")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }

  const Invocation inv{args, out, err};
  try {
    if (*c_char) return cmd_characterize(inv, ch);
    if (*c_tomo) return cmd_tomography(inv, to);
    if (*c_comp) return cmd_compensate(inv, co);
    if (*c_bench) return cmd_bench(inv, be);
    if (*c_ss) return cmd_synth_sweep(inv, ss);
    if (*c_sc) return cmd_synth_scan(inv, sc);
    if (*c_rerun) return cmd_rerun(manifest, out, err);
  } catch (const UsageError& e) {
    err << "polcomp: " << e.what() << "\n";
    return exit_usage;
  } catch (const std::exception& e) {
    err << "polcomp: " << e.what() << "\n";
    return exit_failure;
  }
  return exit_usage;
}

}  // namespace polcomp::cli
