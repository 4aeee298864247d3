#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <iterator>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "maneuver/core/version.hpp"
#include "maneuver/harness/sweep.hpp"
#include "maneuver/ingest/interchange.hpp"
#include "maneuver/ingest/stats.hpp"
#include "maneuver/ingest/synth.hpp"

// Command surface of the maneuver-net binary. Every subcommand follows the
// same shape: merge config file and flags, write the resolved run manifest
// (run.json) into the output directory before any long work starts, then do
// the work. A run is reproducible from its manifest alone.
//
// Exit codes: 0 success, 2 for usage and config problems, 1 for everything
// else. Errors print one "category: message" line to stderr.

namespace maneuver::cli {

inline nlohmann::json load_json_file(const std::string& path) {
  const std::vector<uint8_t> bytes = read_binary_file(path);
  try {
    return nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::exception& e) {
    config_error(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_binary_file(path, j.dump(2) + "\n");
}

inline void write_run_manifest(const std::string& out_dir, const std::string& command,
                               nlohmann::json config) {
  std::filesystem::create_directories(out_dir);
  write_json_file(out_dir + "/run.json", nlohmann::json{{"command", command},
                                                        {"toolkit", kToolkitVersion},
                                                        {"config", std::move(config)}});
}

/// A data directory is either one recording (meta.json at its root) or a
/// directory of recordings, one per child. Ids are the directory names.
inline std::vector<std::pair<std::string, Recording>> load_recordings(const std::string& data_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(data_dir)) io_error("data directory " + data_dir + " does not exist");
  std::vector<std::string> dirs;
  if (fs::exists(fs::path(data_dir) / "meta.json")) {
    dirs.push_back(data_dir);
  } else {
    for (const auto& entry : fs::directory_iterator(data_dir)) {
      if (entry.is_directory() && fs::exists(entry.path() / "meta.json")) {
        dirs.push_back(entry.path().string());
      }
    }
    std::sort(dirs.begin(), dirs.end());
  }
  if (dirs.empty()) {
    validation_error(data_dir + " contains no recordings (expected meta.json at the top or one level down)");
  }
  std::vector<std::pair<std::string, Recording>> out;
  out.reserve(dirs.size());
  for (const auto& dir : dirs) {
    out.emplace_back(fs::path(dir).filename().string(), parse_recording(dir));
  }
  return out;
}

inline std::string version_text() {
  return std::string("maneuver-net ") + kToolkitVersion + "\ninterchange format v" +
         std::to_string(kInterchangeVersion) + "\ntensor container MNT1\ncheckpoint container MNCK v" +
         std::to_string(kCheckpointVersion);
}

// ---------------------------------------------------------------- synth --

struct SynthArgs {
  std::string config_path;
  std::string out;
  int recordings = 1;
  uint64_t seed = 1;
};

inline int run_synth(const SynthArgs& args) {
  SynthConfig scene;
  if (!args.config_path.empty()) scene = synth_config_from_json(load_json_file(args.config_path));
  scene.validate();
  if (args.recordings < 1) usage_error("--recordings must be at least 1");

  // Recording i gets seed (base seed + i), so a dataset can be regenerated
  // piecewise and reruns are byte-identical.
  write_run_manifest(args.out, "synth",
                     nlohmann::json{{"scene", scene},
                                    {"seed", args.seed},
                                    {"recordings", args.recordings},
                                    {"out", args.out}});
  for (int i = 0; i < args.recordings; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "rec_%03d", i);
    const Recording rec = generate_synthetic(scene, args.seed + static_cast<uint64_t>(i));
    write_recording(rec, args.out + "/" + id);
    MANEUVER_LOG_INFO("synth: wrote %s (%lld frames, %zu vehicles, %zu events)", id,
                      static_cast<long long>(rec.frame_count()), rec.tracks.size(), rec.events.size());
  }
  std::cout << "wrote " << args.recordings << " recording(s) to " << args.out << "\n";
  return 0;
}

// ---------------------------------------------------------------- stats --

struct StatsArgs {
  std::vector<std::string> data;
  std::string out;
  int64_t margin = 40;
};

inline int run_stats(const StatsArgs& args) {
  std::vector<std::pair<std::string, Recording>> recordings;
  for (const auto& dir : args.data) {
    auto loaded = load_recordings(dir);
    std::move(loaded.begin(), loaded.end(), std::back_inserter(recordings));
  }
  nlohmann::json per_rec = nlohmann::json::array();
  std::vector<const Recording*> pointers;
  int64_t frames = 0;
  for (const auto& [id, rec] : recordings) {
    pointers.push_back(&rec);
    frames += rec.frame_count();
    per_rec.push_back(nlohmann::json{
        {"id", id}, {"frames", rec.frame_count()}, {"vehicles", rec.tracks.size()}, {"events", rec.events.size()}});
  }
  const DatasetStats stats = dataset_stats(pointers, args.margin);

  std::cout << recordings.size() << " recording(s), " << frames << " frames\n"
            << render_stats_table(stats);
  if (!args.out.empty()) {
    write_run_manifest(args.out, "stats",
                       nlohmann::json{{"data", args.data}, {"nlc_exclusion_margin", args.margin}});
    write_json_file(args.out + "/stats.json",
                    nlohmann::json{{"recordings", per_rec},
                                   {"sequences",
                                    {{"NLC", stats.sequence_count[0]},
                                     {"LLC", stats.sequence_count[1]},
                                     {"RLC", stats.sequence_count[2]}}},
                                   {"mean_frames",
                                    {{"NLC", stats.mean_length[0]},
                                     {"LLC", stats.mean_length[1]},
                                     {"RLC", stats.mean_length[2]}}}});
  }
  return 0;
}

// -------------------------------------------------------------- extract --

struct ExtractArgs {
  std::string data;
  std::string out;
  std::vector<int> scales{2};
  std::string manifest;
  int input_size = 112;
  double flow_clip = 20.0;
};

inline int run_extract(const ExtractArgs& args) {
  ExtractConfig ec;
  ec.input_size = args.input_size;
  ec.flow_clip = static_cast<float>(args.flow_clip);
  if (ec.input_size < 8) usage_error("--size must be at least 8");
  if (!(ec.flow_clip > 0)) usage_error("--flow-clip must be positive");
  for (int s : args.scales) roi_scale_from_int(s);  // reject bad scales before any work

  write_run_manifest(args.out, "extract",
                     nlohmann::json{{"data", args.data},
                                    {"out", args.out},
                                    {"scales", args.scales},
                                    {"manifest", args.manifest},
                                    {"input_size", ec.input_size},
                                    {"flow_clip", ec.flow_clip}});

  const auto recordings = load_recordings(args.data);
  std::vector<SampleWindow> rows;
  if (!args.manifest.empty()) rows = read_manifest(args.manifest);

  ExtractCounts counts;
  for (const auto& [id, rec] : recordings) {
    if (!args.manifest.empty()) {
      // Scales come from the manifest rows; only the frames some window
      // needs are extracted.
      const ExtractCounts c = extract_windows_cache(rec, id, rows, args.out, ec);
      counts.appearance_files += c.appearance_files;
      counts.flow_files += c.flow_files;
    } else {
      for (int s : args.scales) {
        const ExtractCounts c = extract_recording_cache(rec, id, roi_scale_from_int(s), args.out, ec);
        counts.appearance_files += c.appearance_files;
        counts.flow_files += c.flow_files;
      }
    }
    MANEUVER_LOG_INFO("extract: finished %s", id.c_str());
  }
  std::cout << "cached " << counts.appearance_files << " appearance frames and " << counts.flow_files
            << " flow fields under " << args.out << "\n";
  return 0;
}

// -------------------------------------------------------------- windows --

struct WindowsArgs {
  std::string data;
  std::string out;
  int observation_frames = 20;
  int tte = 0;
  int scale = 2;
  int64_t stride = 0;   // 0: one horizon length (non-overlapping)
  int64_t margin = -1;  // <0: twice the horizon
  double val_fraction = 0.15;
  uint64_t seed = 1;
};

inline int run_windows(const WindowsArgs& args) {
  WindowSpec spec;
  spec.observation_frames = args.observation_frames;
  spec.tte = args.tte;
  spec.scale = roi_scale_from_int(args.scale);
  spec.validate();
  const int64_t stride = args.stride > 0 ? args.stride : spec.observation_frames;
  const int64_t margin = args.margin >= 0 ? args.margin : 2 * spec.observation_frames;

  write_run_manifest(args.out, "windows",
                     nlohmann::json{{"data", args.data},
                                    {"observation_frames", spec.observation_frames},
                                    {"tte", spec.tte},
                                    {"scale", args.scale},
                                    {"nlc_stride", stride},
                                    {"nlc_exclusion_margin", margin},
                                    {"val_fraction", args.val_fraction},
                                    {"seed", args.seed}});

  std::vector<SampleWindow> all;
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& [id, rec] : load_recordings(args.data)) {
    const EnumerationResult events = enumerate_event_samples(rec, id, spec);
    all.insert(all.end(), events.windows.begin(), events.windows.end());
    for (const auto& skip : events.skipped) {
      skipped.push_back(nlohmann::json{{"recording", id},
                                       {"vehicle_id", skip.vehicle_id},
                                       {"event_frame", skip.event_frame},
                                       {"reason", skip.reason}});
    }
    const EnumerationResult keeping = enumerate_nlc_samples(rec, id, spec, stride, margin);
    all.insert(all.end(), keeping.windows.begin(), keeping.windows.end());
  }
  if (all.empty()) validation_error("no sample windows could be enumerated from " + args.data);
  const SplitAssignment split = stratified_split(all, args.val_fraction, args.seed);

  write_manifest(args.out + "/all.csv", all);
  write_manifest(args.out + "/train.csv", split.train);
  write_manifest(args.out + "/val.csv", split.val);

  std::array<int64_t, kNumClasses> by_class{};
  for (const auto& w : all) by_class[static_cast<size_t>(w.label)]++;
  const nlohmann::json summary{{"windows", all.size()},
                               {"NLC", by_class[0]},
                               {"LLC", by_class[1]},
                               {"RLC", by_class[2]},
                               {"train", split.train.size()},
                               {"val", split.val.size()},
                               {"skipped", skipped}};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------- train --

struct TrainArgs {
  std::string config_path;
  std::string out;
  // Optional overrides of the config file; empty/negative means "not set".
  std::string cache;
  std::string train_manifest;
  std::string val_manifest;
  std::string model;
  int epochs = -1;
  double learning_rate = -1.0;
  int batch_size = -1;
  double width_multiplier = -1.0;
  bool seed_given = false;
  uint64_t seed = 1;
};

/// Config file for `train`: RunConfig keys plus the data paths, so the file
/// alone can describe a full run. Flags override file values.
struct TrainInvocation {
  RunConfig run;
  std::string cache;
  std::string train_manifest;
  std::string val_manifest;
};

inline TrainInvocation resolve_train_invocation(const TrainArgs& args) {
  nlohmann::json file = load_json_file(args.config_path);
  if (!file.is_object()) config_error(args.config_path + ": expected a JSON object");
  TrainInvocation inv;
  try {
    inv.cache = file.value("cache", std::string{});
    inv.train_manifest = file.value("train_manifest", std::string{});
    inv.val_manifest = file.value("val_manifest", std::string{});
  } catch (const nlohmann::json::exception& e) {
    config_error(args.config_path + ": " + e.what());
  }
  file.erase("cache");
  file.erase("train_manifest");
  file.erase("val_manifest");
  inv.run = run_config_from_json(file, args.config_path);

  if (!args.cache.empty()) inv.cache = args.cache;
  if (!args.train_manifest.empty()) inv.train_manifest = args.train_manifest;
  if (!args.val_manifest.empty()) inv.val_manifest = args.val_manifest;
  if (!args.model.empty()) inv.run.model = model_kind_from_string(args.model);
  if (args.epochs >= 0) inv.run.epochs = args.epochs;
  if (args.learning_rate >= 0) inv.run.learning_rate = args.learning_rate;
  if (args.batch_size >= 0) inv.run.batch_size = args.batch_size;
  if (args.width_multiplier >= 0) inv.run.width_multiplier = args.width_multiplier;
  if (args.seed_given) inv.run.seed = args.seed;
  inv.run.validate();

  if (inv.cache.empty()) config_error("no feature cache given (config key 'cache' or --cache)");
  if (inv.train_manifest.empty()) {
    config_error("no training manifest given (config key 'train_manifest' or --train-manifest)");
  }
  return inv;
}

inline nlohmann::json train_invocation_to_json(const TrainInvocation& inv) {
  nlohmann::json j = run_config_to_json(inv.run);
  j["cache"] = inv.cache;
  j["train_manifest"] = inv.train_manifest;
  j["val_manifest"] = inv.val_manifest;
  return j;
}

inline int run_train(const TrainArgs& args) {
  const TrainInvocation inv = resolve_train_invocation(args);
  write_run_manifest(args.out, "train", train_invocation_to_json(inv));

  const std::vector<SampleWindow> train_rows = read_manifest(inv.train_manifest);
  const std::vector<SampleWindow> val_rows =
      inv.val_manifest.empty() ? std::vector<SampleWindow>{} : read_manifest(inv.val_manifest);

  ClipStore store(inv.cache);
  std::unique_ptr<Model<float>> model = build_model(inv.run);
  const TrainResult result = train_model(*model, inv.run, train_rows, val_rows, store);

  const std::string ckpt = args.out + "/model.ckpt";
  save_run_checkpoint(ckpt, inv.run, *model, result.steps);

  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& s : result.history) {
    epochs.push_back(nlohmann::json{{"train_loss", s.train_loss},
                                    {"val_accuracy", s.val_accuracy},
                                    {"learning_rate", s.learning_rate}});
  }
  write_json_file(args.out + "/history.json",
                  nlohmann::json{{"epochs", epochs},
                                 {"steps", result.steps},
                                 {"final_val_accuracy", result.final_val_accuracy},
                                 {"reached_target", result.reached_target}});

  std::cout << "trained " << model->name() << " for " << result.history.size() << " epoch(s), "
            << result.steps << " step(s); final loss " << result.history.back().train_loss;
  if (result.final_val_accuracy >= 0) std::cout << ", val accuracy " << result.final_val_accuracy << "%";
  std::cout << "; checkpoint " << ckpt << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval --

struct EvalArgs {
  std::string ckpt;
  std::string manifest;
  std::string cache;
  std::string out;
  int batch_size = -1;  // <0: the checkpoint's own batch size
};

inline int run_eval(const EvalArgs& args) {
  LoadedRun run = load_run_checkpoint(args.ckpt);
  const int batch = args.batch_size > 0 ? args.batch_size : run.config.batch_size;
  const nlohmann::json config{{"ckpt", args.ckpt},
                              {"manifest", args.manifest},
                              {"cache", args.cache},
                              {"batch_size", batch},
                              {"run", run_config_to_json(run.config)}};
  if (!args.out.empty()) write_run_manifest(args.out, "eval", config);

  const std::vector<SampleWindow> rows = read_manifest(args.manifest);
  ClipStore store(args.cache);
  EvalReport report = evaluate_model(*run.model, rows, store, batch);
  report.config_echo = config;

  const std::string text = render_report(report);
  std::cout << text;
  if (!args.out.empty()) {
    write_json_file(args.out + "/report.json", report_to_json(report));
    write_binary_file(args.out + "/report.txt", text);
  }
  return 0;
}

// ---------------------------------------------------------------- sweep --

struct SweepArgs {
  std::string grid_path;
  std::string data;
  std::string cache;
  std::string out;
};

/// Grid files describe a cross product: a base run config plus per-axis
/// value lists. Axes left out stay at the base value. Example:
///   {"base": {"epochs": 20}, "models": ["baseline", "i3d"],
///    "observation_frames": [20, 30, 40], "scales": [1, 2, 3, 4],
///    "dataset": {"val_fraction": 0.15}}
inline std::vector<RunConfig> grid_from_json(const nlohmann::json& j, const std::string& what,
                                             SweepDataset& ds) {
  if (!j.is_object()) config_error(what + ": grid must be a JSON object");
  nlohmann::json base = nlohmann::json::object();
  std::vector<std::string> models;
  std::vector<int> scales, horizons, ttes;
  bool base_has_batch = false;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "base") {
        base = value;
        base_has_batch = value.is_object() && value.contains("batch_size");
      } else if (key == "models") {
        models = value.get<std::vector<std::string>>();
      } else if (key == "scales") {
        scales = value.get<std::vector<int>>();
      } else if (key == "observation_frames") {
        horizons = value.get<std::vector<int>>();
      } else if (key == "ttes") {
        ttes = value.get<std::vector<int>>();
      } else if (key == "dataset") {
        for (const auto& [dk, dv] : value.items()) {
          if (dk == "nlc_stride") ds.nlc_stride = dv.get<int64_t>();
          else if (dk == "nlc_exclusion_margin") ds.nlc_exclusion_margin = dv.get<int64_t>();
          else if (dk == "val_fraction") ds.val_fraction = dv.get<double>();
          else if (dk == "split_seed") ds.split_seed = dv.get<uint64_t>();
          else config_error(what + ": unknown dataset key '" + dk + "'");
        }
      } else {
        config_error(what + ": unknown grid key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    config_error(what + ": " + e.what());
  }

  const RunConfig base_cfg = run_config_from_json(base, what);
  if (models.empty()) models = {to_string(base_cfg.model)};
  if (scales.empty()) scales = {to_int(base_cfg.window.scale)};
  if (horizons.empty()) horizons = {base_cfg.window.observation_frames};
  if (ttes.empty()) ttes = {base_cfg.window.tte};

  std::vector<RunConfig> grid;
  for (const auto& model : models) {
    for (int n : horizons) {
      for (int tte : ttes) {
        for (int scale : scales) {
          RunConfig cfg = base_cfg;
          cfg.model = model_kind_from_string(model);
          cfg.window.observation_frames = n;
          cfg.window.tte = tte;
          cfg.window.scale = roi_scale_from_int(scale);
          // The reference experiments used batch 32 everywhere except
          // slowfast; keep that pairing unless the base pins one.
          if (!base_has_batch) cfg.batch_size = RunConfig::parity_batch_size(cfg.model);
          cfg.validate();
          grid.push_back(cfg);
        }
      }
    }
  }
  return grid;
}

inline int run_sweep(const SweepArgs& args) {
  const nlohmann::json grid_json = load_json_file(args.grid_path);
  SweepDataset ds;
  ds.cache_root = args.cache;
  const std::vector<RunConfig> grid = grid_from_json(grid_json, args.grid_path, ds);

  write_run_manifest(args.out, "sweep",
                     nlohmann::json{{"grid", grid_json}, {"data", args.data}, {"cache", args.cache}});

  ds.recordings = load_recordings(args.data);
  SweepOptions options;
  options.checkpoint_dir = args.out + "/checkpoints";
  const SweepResult result = run_sweep(grid, ds, options);

  nlohmann::json metrics = sweep_to_json(result);
  metrics["data"] = args.data;
  metrics["cache"] = args.cache;
  write_json_file(args.out + "/sweep.json", metrics);
  const std::string table = render_sweep_table(result);
  write_binary_file(args.out + "/sweep.txt", table);
  std::cout << table;

  const bool any_ok = std::any_of(result.cells.begin(), result.cells.end(),
                                  [](const SweepCell& c) { return c.ok; });
  if (!any_ok) validation_error("every sweep cell failed; see " + args.out + "/sweep.json");
  return 0;
}

// --------------------------------------------------------------- report --

struct ReportArgs {
  std::string input;
  std::string out;
};

inline int run_report(const ReportArgs& args) {
  const nlohmann::json j = load_json_file(args.input);
  std::string text;
  if (j.contains("cells")) {
    text = render_sweep_table(sweep_from_json(j, args.input));
  } else if (j.contains("matrix")) {
    text = render_report(eval_report_from_json(j, args.input));
  } else {
    config_error(args.input + ": expected a sweep metrics file (cells) or an evaluation report (matrix)");
  }
  std::cout << text;
  if (!args.out.empty()) {
    write_run_manifest(args.out, "report", nlohmann::json{{"input", args.input}});
    write_binary_file(args.out + "/report.txt", text);
  }
  return 0;
}

// ------------------------------------------------------------- dispatch --

inline int dispatch(int argc, const char* const* argv) {
  CLI::App app{"lane-change classification and prediction toolkit"};
  app.name("maneuver-net");
  app.require_subcommand(1);
  app.set_version_flag("--version", version_text());

  std::string log_level = "info";
  app.add_option("--log-level", log_level, "error, warn, info or debug")->capture_default_str();
  uint64_t seed = 1;
  CLI::Option* seed_opt = app.add_option("--seed", seed, "seed for anything randomized");
  seed_opt->capture_default_str();

  std::vector<std::pair<CLI::App*, std::function<int()>>> runners;

  {
    auto a = std::make_shared<SynthArgs>();
    CLI::App* sub = app.add_subcommand("synth", "generate synthetic highway recordings");
    sub->fallthrough();
    sub->add_option("--config", a->config_path, "scene config file (JSON); defaults when omitted");
    sub->add_option("--recordings", a->recordings, "number of recordings to generate")
        ->capture_default_str();
    sub->add_option("--out", a->out, "output dataset directory")->required();
    runners.emplace_back(sub, [a, &seed]() {
      a->seed = seed;
      return run_synth(*a);
    });
  }
  {
    auto a = std::make_shared<StatsArgs>();
    CLI::App* sub = app.add_subcommand("stats", "summarize datasets (recordings, tracks, events)");
    sub->fallthrough();
    sub->add_option("--data", a->data, "dataset directories")->required()->expected(-1);
    sub->add_option("--out", a->out, "also write stats.json here");
    sub->add_option("--margin", a->margin, "lane-keeping exclusion margin, frames")
        ->capture_default_str();
    runners.emplace_back(sub, [a]() { return run_stats(*a); });
  }
  {
    auto a = std::make_shared<ExtractArgs>();
    CLI::App* sub = app.add_subcommand("extract", "cache ROI crops and optical flow for training");
    sub->fallthrough();
    sub->add_option("--data", a->data, "dataset directory")->required();
    sub->add_option("--out", a->out, "cache root directory")->required();
    CLI::Option* scale = sub->add_option("--scale", a->scales, "ROI scales to extract (1-4)")
                             ->capture_default_str()
                             ->check(CLI::Range(1, 4));
    sub->add_option("--manifest", a->manifest,
                    "window manifest; restricts extraction to the frames its windows need "
                    "(scales come from the manifest)")
        ->excludes(scale);
    sub->add_option("--size", a->input_size, "cached crop resolution")->capture_default_str();
    sub->add_option("--flow-clip", a->flow_clip, "flow clipping bound, px/frame")->capture_default_str();
    runners.emplace_back(sub, [a]() { return run_extract(*a); });
  }
  {
    auto a = std::make_shared<WindowsArgs>();
    CLI::App* sub = app.add_subcommand("windows", "enumerate sample windows and write manifests");
    sub->fallthrough();
    sub->add_option("--data", a->data, "dataset directory")->required();
    sub->add_option("--out", a->out, "manifest output directory")->required();
    sub->add_option("--n", a->observation_frames, "observation horizon, frames")->capture_default_str();
    sub->add_option("--tte", a->tte, "time to event, frames")->capture_default_str();
    sub->add_option("--scale", a->scale, "ROI scale (1-4)")
        ->capture_default_str()
        ->check(CLI::Range(1, 4));
    sub->add_option("--stride", a->stride, "lane-keeping window stride (default: one horizon)");
    sub->add_option("--margin", a->margin, "lane-keeping exclusion margin (default: two horizons)");
    sub->add_option("--val-fraction", a->val_fraction, "validation split fraction")
        ->capture_default_str();
    runners.emplace_back(sub, [a, &seed]() {
      a->seed = seed;
      return run_windows(*a);
    });
  }
  {
    auto a = std::make_shared<TrainArgs>();
    CLI::App* sub = app.add_subcommand("train", "train one model from a run config");
    sub->fallthrough();
    sub->add_option("--config", a->config_path, "run config file (JSON)")->required();
    sub->add_option("--out", a->out, "run output directory")->required();
    sub->add_option("--cache", a->cache, "feature cache root (overrides config)");
    sub->add_option("--train-manifest", a->train_manifest, "training manifest (overrides config)");
    sub->add_option("--val-manifest", a->val_manifest, "validation manifest (overrides config)");
    sub->add_option("--model", a->model, "model override: baseline, disjoint, i3d, stm, slowfast");
    sub->add_option("--epochs", a->epochs, "epoch override");
    sub->add_option("--learning-rate", a->learning_rate, "learning-rate override");
    sub->add_option("--batch-size", a->batch_size, "batch-size override");
    sub->add_option("--width-multiplier", a->width_multiplier, "width-multiplier override");
    runners.emplace_back(sub, [a, &seed, seed_opt]() {
      a->seed_given = seed_opt->count() > 0;
      a->seed = seed;
      return run_train(*a);
    });
  }
  {
    auto a = std::make_shared<EvalArgs>();
    CLI::App* sub = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
    sub->fallthrough();
    sub->add_option("--ckpt", a->ckpt, "checkpoint file")->required();
    sub->add_option("--manifest", a->manifest, "evaluation manifest")->required();
    sub->add_option("--cache", a->cache, "feature cache root")->required();
    sub->add_option("--out", a->out, "also write report.json/report.txt here");
    sub->add_option("--batch-size", a->batch_size, "evaluation batch size");
    runners.emplace_back(sub, [a]() { return run_eval(*a); });
  }
  {
    auto a = std::make_shared<SweepArgs>();
    CLI::App* sub = app.add_subcommand("sweep", "train and evaluate a grid of runs");
    sub->fallthrough();
    sub->add_option("--grid", a->grid_path, "grid config file (JSON)")->required();
    sub->add_option("--data", a->data, "dataset directory")->required();
    sub->add_option("--cache", a->cache, "feature cache root")->required();
    sub->add_option("--out", a->out, "sweep output directory")->required();
    runners.emplace_back(sub, [a]() { return run_sweep(*a); });
  }
  {
    auto a = std::make_shared<ReportArgs>();
    CLI::App* sub = app.add_subcommand("report", "render tables from recorded metrics");
    sub->fallthrough();
    sub->add_option("--input", a->input, "sweep.json or report.json file")->required();
    sub->add_option("--out", a->out, "also write the rendered table here");
    runners.emplace_back(sub, [a]() { return run_report(*a); });
  }

  try {
    app.parse(argc, argv);
    if (!set_log_level(log_level)) usage_error("unknown log level '" + log_level + "'");
    for (const auto& [sub, fn] : runners) {
      if (sub->parsed()) return fn();
    }
    internal_error("no subcommand dispatched");
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage: " << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    const bool usage = e.category() == ErrorCategory::usage || e.category() == ErrorCategory::config;
    return usage ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace maneuver::cli
