#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "maneuver/core/error.hpp"
#include "maneuver/core/log.hpp"
#include "maneuver/core/rng.hpp"
#include "maneuver/harness/dataset.hpp"
#include "maneuver/harness/metrics.hpp"
#include "maneuver/nets/checkpoint.hpp"
#include "maneuver/nets/i3d.hpp"
#include "maneuver/nets/slowfast.hpp"
#include "maneuver/nets/stm.hpp"
#include "maneuver/nets/two_stream.hpp"
#include "maneuver/windowing/windowing.hpp"

namespace maneuver {

enum class ModelKind { baseline, disjoint, i3d, stm, slowfast };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::baseline: return "baseline";
    case ModelKind::disjoint: return "disjoint";
    case ModelKind::i3d: return "i3d";
    case ModelKind::stm: return "stm";
    case ModelKind::slowfast: return "slowfast";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "baseline") return ModelKind::baseline;
  if (s == "disjoint") return ModelKind::disjoint;
  if (s == "i3d") return ModelKind::i3d;
  if (s == "stm") return ModelKind::stm;
  if (s == "slowfast") return ModelKind::slowfast;
  config_error("unknown model '" + s + "' (expected baseline, disjoint, i3d, stm or slowfast)");
}

/// Everything one training run depends on. Serialized verbatim into run
/// manifests and checkpoints so a result can be reproduced from its
/// artifacts alone.
struct RunConfig {
  ModelKind model = ModelKind::baseline;
  WindowSpec window;
  int batch_size = 32;
  double learning_rate = 1e-2;
  int epochs = 10;
  uint64_t seed = 1;
  double width_multiplier = 1.0;
  int input_size = 112;

  // Clip shaping. clip_frames feeds the models that fold time into the
  // batch (baseline, disjoint appearance, stm); 0 means the native window
  // length. flow_pairs is the disjoint motion stack depth; 0 means N-1.
  int clip_frames = 0;
  int flow_pairs = 0;

  double momentum = 0.9;
  // Step decay: multiply the rate by lr_decay_factor every lr_decay_epochs
  // epochs; 0 disables.
  int lr_decay_epochs = 0;
  double lr_decay_factor = 0.1;
  // Inverse-frequency class weighting (off by default; the reference
  // training regime keeps the imbalanced distribution).
  bool class_weights = false;
  // Early stop once validation accuracy reaches this (percent; 0 = run all
  // epochs).
  double target_val_accuracy = 0.0;

  void validate() const {
    window.validate();
    if (batch_size < 1) config_error("batch_size must be at least 1");
    if (!(learning_rate >= 0.0)) config_error("learning_rate must be non-negative");
    if (epochs < 1) config_error("epochs must be at least 1");
    if (!(width_multiplier > 0.0)) config_error("width_multiplier must be positive");
    if (input_size < 8) config_error("input_size must be at least 8");
    if (clip_frames < 0 || flow_pairs < 0) config_error("clip lengths must be non-negative");
    if (!(momentum >= 0.0 && momentum < 1.0)) config_error("momentum must be in [0, 1)");
    if (lr_decay_epochs < 0) config_error("lr_decay_epochs must be non-negative");
    if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0)) {
      config_error("lr_decay_factor must be in (0, 1]");
    }
  }

  /// The reference batch size is 32 for every model except slowfast, which
  /// only fit 8 per batch in the original experiments.
  static int parity_batch_size(ModelKind k) { return k == ModelKind::slowfast ? 8 : 32; }
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  return nlohmann::json{{"model", to_string(c.model)},
                        {"observation_frames", c.window.observation_frames},
                        {"tte", c.window.tte},
                        {"scale", to_int(c.window.scale)},
                        {"batch_size", c.batch_size},
                        {"learning_rate", c.learning_rate},
                        {"epochs", c.epochs},
                        {"seed", c.seed},
                        {"width_multiplier", c.width_multiplier},
                        {"input_size", c.input_size},
                        {"clip_frames", c.clip_frames},
                        {"flow_pairs", c.flow_pairs},
                        {"momentum", c.momentum},
                        {"lr_decay_epochs", c.lr_decay_epochs},
                        {"lr_decay_factor", c.lr_decay_factor},
                        {"class_weights", c.class_weights},
                        {"target_val_accuracy", c.target_val_accuracy}};
}

/// Strict parse: unknown keys are config errors so a typo cannot silently
/// fall back to a default; missing keys keep their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::string& what) {
  RunConfig c;
  if (!j.is_object()) config_error(what + ": run config must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "model") c.model = model_kind_from_string(value.get<std::string>());
      else if (key == "observation_frames") c.window.observation_frames = value.get<int>();
      else if (key == "tte") c.window.tte = value.get<int>();
      else if (key == "scale") c.window.scale = roi_scale_from_int(value.get<int>());
      else if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "learning_rate") c.learning_rate = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "seed") c.seed = value.get<uint64_t>();
      else if (key == "width_multiplier") c.width_multiplier = value.get<double>();
      else if (key == "input_size") c.input_size = value.get<int>();
      else if (key == "clip_frames") c.clip_frames = value.get<int>();
      else if (key == "flow_pairs") c.flow_pairs = value.get<int>();
      else if (key == "momentum") c.momentum = value.get<double>();
      else if (key == "lr_decay_epochs") c.lr_decay_epochs = value.get<int>();
      else if (key == "lr_decay_factor") c.lr_decay_factor = value.get<double>();
      else if (key == "class_weights") c.class_weights = value.get<bool>();
      else if (key == "target_val_accuracy") c.target_val_accuracy = value.get<double>();
      else config_error(what + ": unknown run config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    config_error(what + ": " + e.what());
  }
  c.validate();
  return c;
}

/// Seeded model construction. The config decides the architecture; the rng
/// decides the weights.
inline std::unique_ptr<Model<float>> build_model(const RunConfig& cfg, Rng& rng) {
  cfg.validate();
  switch (cfg.model) {
    case ModelKind::baseline: {
      TwoStreamConfig mc;
      mc.width_multiplier = cfg.width_multiplier;
      mc.input_size = cfg.input_size;
      mc.clip_frames = cfg.clip_frames;
      return std::make_unique<BaselineModel<float>>(mc, rng);
    }
    case ModelKind::disjoint: {
      TwoStreamConfig mc;
      mc.width_multiplier = cfg.width_multiplier;
      mc.input_size = cfg.input_size;
      mc.clip_frames = cfg.clip_frames;
      mc.flow_pairs = cfg.flow_pairs > 0 ? cfg.flow_pairs : cfg.window.observation_frames - 1;
      return std::make_unique<DisjointModel<float>>(mc, rng);
    }
    case ModelKind::i3d: {
      I3dConfig mc;
      mc.width_multiplier = cfg.width_multiplier;
      mc.input_size = cfg.input_size;
      return std::make_unique<I3dModel<float>>(mc, rng);
    }
    case ModelKind::stm: {
      StmConfig mc;
      mc.width_multiplier = cfg.width_multiplier;
      mc.input_size = cfg.input_size;
      mc.clip_frames = cfg.clip_frames;
      return std::make_unique<StmModel<float>>(mc, rng);
    }
    case ModelKind::slowfast: {
      SlowFastConfig mc;
      mc.width_multiplier = cfg.width_multiplier;
      mc.input_size = cfg.input_size;
      return std::make_unique<SlowFastModel<float>>(mc, rng);
    }
  }
  internal_error("unhandled model kind");
}

inline std::unique_ptr<Model<float>> build_model(const RunConfig& cfg) {
  Rng rng(splitmix64(cfg.seed ^ 0x4D4F44454CULL));  // "MODEL"
  return build_model(cfg, rng);
}

/// Plain SGD with classical momentum: v <- mu v + g; w <- w - lr v.
/// A zero learning rate therefore never changes the weights.
class SgdOptimizer {
 public:
  explicit SgdOptimizer(double momentum) : momentum_(static_cast<float>(momentum)) {}

  void step(ParamStore<float>& params, double learning_rate) {
    auto& entries = params.params();
    if (velocity_.empty()) {
      velocity_.reserve(entries.size());
      for (auto& e : entries) velocity_.push_back(Tensor<float>::zeros(e.var.value().shape));
    }
    require(velocity_.size() == entries.size(), "optimizer bound to a different parameter set");
    const float lr = static_cast<float>(learning_rate);
    for (size_t i = 0; i < entries.size(); ++i) {
      const Tensor<float>& g = entries[i].var.grad();
      Tensor<float>& v = velocity_[i];
      float* w = entries[i].var.mutable_value().data.data();
      for (size_t k = 0; k < v.data.size(); ++k) {
        v.data[k] = momentum_ * v.data[k] + g.data[k];
        w[k] -= lr * v.data[k];
      }
    }
  }

 private:
  float momentum_;
  std::vector<Tensor<float>> velocity_;
};

struct EpochStats {
  double train_loss = 0.0;
  double val_accuracy = -1.0;  // -1 when no validation set was given
  double learning_rate = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int64_t steps = 0;
  double final_val_accuracy = -1.0;
  bool reached_target = false;
};

namespace train_detail {

inline std::vector<ClipSample<float>> load_batch(const Model<float>& model, const ClipStore& store,
                                                 const std::vector<SampleWindow>& windows,
                                                 const std::vector<size_t>& order, size_t begin, size_t end,
                                                 std::vector<int>* labels) {
  std::vector<ClipSample<float>> batch;
  batch.reserve(end - begin);
  if (labels) labels->clear();
  for (size_t i = begin; i < end; ++i) {
    const SampleWindow& w = windows[order[i]];
    batch.push_back(store.load_for(model, w));
    if (labels) labels->push_back(static_cast<int>(w.label));
  }
  return batch;
}

/// Inverse-frequency weights over the training labels; classes that never
/// occur get weight zero (they cannot contribute to the loss anyway).
inline std::vector<float> inverse_frequency_weights(const std::vector<SampleWindow>& windows) {
  std::array<int64_t, kNumClasses> counts{};
  for (const auto& w : windows) counts[static_cast<size_t>(w.label)]++;
  std::vector<float> weights(kNumClasses, 0.0f);
  for (int c = 0; c < kNumClasses; ++c) {
    if (counts[static_cast<size_t>(c)] > 0) {
      weights[static_cast<size_t>(c)] = static_cast<float>(windows.size()) /
                                        (kNumClasses * static_cast<float>(counts[static_cast<size_t>(c)]));
    }
  }
  return weights;
}

}  // namespace train_detail

/// Confusion-matrix evaluation over a manifest: fused probabilities, argmax
/// with ties to the lower class index, each sample counted exactly once.
inline EvalReport evaluate_model(Model<float>& model, const std::vector<SampleWindow>& windows,
                                 const ClipStore& store, int batch_size = 32) {
  if (windows.empty()) validation_error("evaluation manifest is empty");
  if (batch_size < 1) config_error("batch_size must be at least 1");
  ConfusionMatrix matrix;
  std::vector<size_t> order(windows.size());
  std::iota(order.begin(), order.end(), size_t{0});
  for (size_t begin = 0; begin < windows.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(windows.size(), begin + static_cast<size_t>(batch_size));
    const auto batch = train_detail::load_batch(model, store, windows, order, begin, end, nullptr);
    const std::vector<ClassScores> scores = predict(model, batch);
    for (size_t i = 0; i < scores.size(); ++i) {
      matrix.add(scores[i].predicted_class(), static_cast<int>(windows[begin + i].label));
    }
  }
  return confusion_metrics(matrix);
}

/// Seeded SGD training. Data order, weight init and therefore the whole
/// loss history are functions of the config alone; running twice with the
/// same config gives bitwise-identical histories.
inline TrainResult train_model(Model<float>& model, const RunConfig& cfg,
                               const std::vector<SampleWindow>& train_windows,
                               const std::vector<SampleWindow>& val_windows, const ClipStore& store) {
  cfg.validate();
  if (train_windows.empty()) validation_error("training manifest is empty");

  const std::vector<float> weights =
      cfg.class_weights ? train_detail::inverse_frequency_weights(train_windows) : std::vector<float>{};

  SgdOptimizer opt(cfg.momentum);
  Rng shuffle_root(splitmix64(cfg.seed ^ 0x5348554646ULL));  // "SHUFF"
  double lr = cfg.learning_rate;

  TrainResult result;
  std::vector<size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::vector<int> labels;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (cfg.lr_decay_epochs > 0 && epoch > 0 && epoch % cfg.lr_decay_epochs == 0) {
      lr *= cfg.lr_decay_factor;
    }
    Rng erng = shuffle_root.substream(static_cast<uint64_t>(epoch));
    erng.shuffle(order);

    double loss_sum = 0.0;
    int64_t seen = 0;
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      const auto batch = train_detail::load_batch(model, store, train_windows, order, begin, end, &labels);

      model.params().zero_grads();
      auto streams = model.forward(batch, /*training=*/true);
      Var<float> loss = multi_stream_loss(streams, labels, weights);
      const double loss_value = static_cast<double>(loss.value().data[0]);
      if (!std::isfinite(loss_value)) {
        validation_error("training diverged: loss " + std::to_string(loss_value) + " at epoch " +
                         std::to_string(epoch + 1) + " step " + std::to_string(result.steps + 1) +
                         " (model " + model.name() + ", lr " + std::to_string(lr) + ")");
      }
      backward(loss);
      opt.step(model.params(), lr);

      loss_sum += loss_value * static_cast<double>(end - begin);
      seen += static_cast<int64_t>(end - begin);
      ++result.steps;
    }

    EpochStats stats;
    stats.train_loss = loss_sum / static_cast<double>(seen);
    stats.learning_rate = lr;
    if (!val_windows.empty()) {
      stats.val_accuracy = evaluate_model(model, val_windows, store, cfg.batch_size).accuracy;
      result.final_val_accuracy = stats.val_accuracy;
    }
    result.history.push_back(stats);
    MANEUVER_LOG_INFO("%s epoch %d/%d: loss %.4f%s", model.name().c_str(), epoch + 1, cfg.epochs,
                      stats.train_loss,
                      stats.val_accuracy >= 0
                          ? (" val " + std::to_string(stats.val_accuracy).substr(0, 5) + "%").c_str()
                          : "");

    if (cfg.target_val_accuracy > 0 && stats.val_accuracy >= cfg.target_val_accuracy) {
      result.reached_target = true;
      break;
    }
  }
  return result;
}

/// Checkpoint glue: the config travels inside the file so evaluation can
/// rebuild the exact architecture without external context.
inline void save_run_checkpoint(const std::string& path, const RunConfig& cfg, Model<float>& model,
                                int64_t steps) {
  CheckpointMeta meta;
  meta.model = model.name();
  meta.config = run_config_to_json(cfg);
  meta.seed = cfg.seed;
  meta.step = steps;
  write_checkpoint(path, meta, model.params());
}

struct LoadedRun {
  RunConfig config;
  std::unique_ptr<Model<float>> model;
  CheckpointMeta meta;
};

inline LoadedRun load_run_checkpoint(const std::string& path) {
  LoadedRun run;
  run.meta = read_checkpoint_meta(path);
  run.config = run_config_from_json(run.meta.config, path);
  if (to_string(run.config.model) != run.meta.model) {
    format_error(path + ": checkpoint model '" + run.meta.model + "' disagrees with its config echo");
  }
  run.model = build_model(run.config);
  run.meta = load_checkpoint(path, run.model->params());
  return run;
}

}  // namespace maneuver
