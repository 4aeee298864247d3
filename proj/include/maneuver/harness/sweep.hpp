#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "maneuver/harness/train.hpp"

namespace maneuver {

/// Shared data context for a sweep: the parsed recordings, the extracted
/// cache root (which must already cover every scale in the grid), and the
/// windowing/split parameters held fixed across cells.
struct SweepDataset {
  std::vector<std::pair<std::string, Recording>> recordings;
  std::string cache_root;
  int64_t nlc_stride = 10;
  int64_t nlc_exclusion_margin = 30;
  double val_fraction = 0.15;
  uint64_t split_seed = 1;
};

/// All windows for one spec over the whole dataset, split train/val. The
/// split depends only on the dataset and the spec, never on the model, so
/// every model in a sweep row sees identical data.
inline SplitAssignment enumerate_and_split(const SweepDataset& ds, const WindowSpec& spec) {
  std::vector<SampleWindow> all;
  for (const auto& [id, rec] : ds.recordings) {
    const auto events = enumerate_event_samples(rec, id, spec);
    all.insert(all.end(), events.windows.begin(), events.windows.end());
    const auto keeping = enumerate_nlc_samples(rec, id, spec, ds.nlc_stride, ds.nlc_exclusion_margin);
    all.insert(all.end(), keeping.windows.begin(), keeping.windows.end());
  }
  if (all.empty()) validation_error("no sample windows could be enumerated for this window spec");
  return stratified_split(all, ds.val_fraction, ds.split_seed);
}

struct SweepCell {
  RunConfig config;
  bool ok = false;
  std::string error;
  EvalReport report;
  int64_t train_samples = 0;
  int64_t val_samples = 0;
  std::string checkpoint_path;
};

struct SweepOptions {
  // When set, each trained cell is checkpointed here so results can be
  // re-evaluated without retraining.
  std::string checkpoint_dir;
};

struct SweepResult {
  std::vector<SweepCell> cells;
};

/// Trains and evaluates one cell per grid entry. A failing cell records its
/// error and the sweep moves on; only an empty grid is fatal.
inline SweepResult run_sweep(const std::vector<RunConfig>& grid, const SweepDataset& ds,
                             const SweepOptions& options = {}) {
  if (grid.empty()) validation_error("sweep grid is empty");
  if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);
  ClipStore store(ds.cache_root);

  SweepResult result;
  for (size_t i = 0; i < grid.size(); ++i) {
    SweepCell cell;
    cell.config = grid[i];
    try {
      cell.config.validate();
      const SplitAssignment split = enumerate_and_split(ds, cell.config.window);
      cell.train_samples = static_cast<int64_t>(split.train.size());
      cell.val_samples = static_cast<int64_t>(split.val.size());
      std::unique_ptr<Model<float>> model = build_model(cell.config);
      const TrainResult trained = train_model(*model, cell.config, split.train, split.val, store);
      cell.report = evaluate_model(*model, split.val, store, cell.config.batch_size);
      cell.report.config_echo = run_config_to_json(cell.config);
      if (!options.checkpoint_dir.empty()) {
        char name[128];
        std::snprintf(name, sizeof(name), "cell_%02zu_%s_n%d_tte%d_x%d.ckpt", i,
                      to_string(cell.config.model), cell.config.window.observation_frames,
                      cell.config.window.tte, to_int(cell.config.window.scale));
        cell.checkpoint_path = options.checkpoint_dir + "/" + name;
        save_run_checkpoint(cell.checkpoint_path, cell.config, *model, trained.steps);
      }
      cell.ok = true;
      MANEUVER_LOG_INFO("sweep cell %zu/%zu: %s N=%d tte=%d x%d -> %.2f%%", i + 1, grid.size(),
                        to_string(cell.config.model), cell.config.window.observation_frames,
                        cell.config.window.tte, to_int(cell.config.window.scale), cell.report.accuracy);
    } catch (const Error& e) {
      cell.error = e.what();
      MANEUVER_LOG_WARN("sweep cell %zu/%zu failed: %s", i + 1, grid.size(), e.what());
    }
    result.cells.push_back(std::move(cell));
  }
  return result;
}

namespace sweep_detail {

inline std::string pad_left(const std::string& s, size_t width) {
  std::string out = s;
  while (out.size() < width) out.insert(out.begin(), ' ');
  return out;
}

inline std::string pad_right(const std::string& s, size_t width) {
  std::string out = s;
  while (out.size() < width) out.push_back(' ');
  return out;
}

}  // namespace sweep_detail

/// Accuracy grid as text: one row per (model, observation horizon, TTE)
/// combination present, one column per ROI scale. When the grid varies only
/// the horizon (classification layout) or only the TTE (prediction layout)
/// the constant column is lifted into the title. The best cell of each model
/// is starred.
inline std::string render_sweep_table(const SweepResult& result) {
  using RowKey = std::tuple<int, int, int>;  // model kind, N, tte
  std::vector<int> scales;
  std::map<RowKey, std::map<int, const SweepCell*>> rows;
  bool same_tte = true, same_n = true;
  const SweepCell* first = result.cells.empty() ? nullptr : &result.cells.front();
  std::map<int, double> best_per_model;
  for (const auto& cell : result.cells) {
    const int scale = to_int(cell.config.window.scale);
    if (std::find(scales.begin(), scales.end(), scale) == scales.end()) scales.push_back(scale);
    rows[{static_cast<int>(cell.config.model), cell.config.window.observation_frames,
          cell.config.window.tte}][scale] = &cell;
    same_tte = same_tte && cell.config.window.tte == first->config.window.tte;
    same_n = same_n &&
             cell.config.window.observation_frames == first->config.window.observation_frames;
    if (cell.ok) {
      auto [it, inserted] = best_per_model.try_emplace(static_cast<int>(cell.config.model),
                                                       cell.report.accuracy);
      if (!inserted) it->second = std::max(it->second, cell.report.accuracy);
    }
  }
  std::sort(scales.begin(), scales.end());

  // A column that is constant across the whole grid moves into the title,
  // so a classification sweep reads model/N and a prediction sweep model/tte.
  std::string title = "accuracy (%) by ROI scale";
  const bool show_n = !same_n;
  const bool show_tte = !same_tte;
  if (first && same_n) title += " (N=" + std::to_string(first->config.window.observation_frames) + ")";
  if (first && same_tte) title += " (tte=" + std::to_string(first->config.window.tte) + ")";

  std::string out = title + "\n";
  out += sweep_detail::pad_right("model", 10);
  if (show_n) out += sweep_detail::pad_left("N", 4);
  if (show_tte) out += sweep_detail::pad_left("tte", 5);
  for (int s : scales) out += sweep_detail::pad_left("x" + std::to_string(s), 8);
  out += "\n";

  for (const auto& [key, by_scale] : rows) {
    const auto [model, n, tte] = key;
    out += sweep_detail::pad_right(to_string(static_cast<ModelKind>(model)), 10);
    if (show_n) out += sweep_detail::pad_left(std::to_string(n), 4);
    if (show_tte) out += sweep_detail::pad_left(std::to_string(tte), 5);
    for (int s : scales) {
      auto it = by_scale.find(s);
      std::string text = "-";
      if (it != by_scale.end()) {
        if (!it->second->ok) {
          text = "err";
        } else {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.1f", it->second->report.accuracy);
          text = buf;
          if (it->second->report.accuracy == best_per_model[model]) text += "*";
        }
      }
      out += sweep_detail::pad_left(text, 8);
    }
    out += "\n";
  }
  return out;
}

inline nlohmann::json sweep_to_json(const SweepResult& result) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : result.cells) {
    nlohmann::json j;
    j["config"] = run_config_to_json(cell.config);
    j["ok"] = cell.ok;
    if (cell.ok) {
      j["report"] = report_to_json(cell.report);
      j["train_samples"] = cell.train_samples;
      j["val_samples"] = cell.val_samples;
      if (!cell.checkpoint_path.empty()) j["checkpoint"] = cell.checkpoint_path;
    } else {
      j["error"] = cell.error;
    }
    cells.push_back(std::move(j));
  }
  return nlohmann::json{{"cells", cells}};
}

/// Inverse of sweep_to_json, for re-rendering tables from a recorded
/// metrics file without retraining anything.
inline SweepResult sweep_from_json(const nlohmann::json& j, const std::string& what) {
  SweepResult result;
  try {
    for (const auto& cj : j.at("cells")) {
      SweepCell cell;
      cell.config = run_config_from_json(cj.at("config"), what);
      cell.ok = cj.at("ok").get<bool>();
      if (cell.ok) {
        cell.report = eval_report_from_json(cj.at("report"), what);
        cell.train_samples = cj.value("train_samples", int64_t{0});
        cell.val_samples = cj.value("val_samples", int64_t{0});
        cell.checkpoint_path = cj.value("checkpoint", std::string{});
      } else {
        cell.error = cj.value("error", std::string{"unrecorded failure"});
      }
      result.cells.push_back(std::move(cell));
    }
  } catch (const nlohmann::json::exception& e) {
    format_error(what + ": " + e.what());
  }
  return result;
}

}  // namespace maneuver
