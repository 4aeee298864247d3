#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "maneuver/core/binary_io.hpp"
#include "maneuver/core/error.hpp"
#include "maneuver/core/log.hpp"
#include "maneuver/flow/flow.hpp"
#include "maneuver/ingest/types.hpp"
#include "maneuver/nets/model.hpp"
#include "maneuver/roi/roi.hpp"
#include "maneuver/windowing/windowing.hpp"

namespace maneuver {

// Extraction turns recordings into per-frame cache files the trainer can
// load without touching PNGs again:
//   <root>/<recording>/<vehicle>/<scale>/<frame>.npyish      appearance, uint8 [3,S,S]
//   <root>/<recording>/<vehicle>/<scale>/flow/<frame>.bin    flow to next frame, int16 [2,S,S]
// Appearance is the resized ROI crop re-quantized to bytes; flow is the
// clipped, normalized field quantized to int16 (resolution 1/32767, far
// below estimator noise). A flow file is keyed by the first frame of its
// pair, so a track run of k frames yields k appearance files and k-1 flow
// files.

struct ExtractConfig {
  int input_size = 112;
  float flow_clip = 20.0f;
  FlowParams flow_params;
};

namespace cache_detail {

inline std::string frame_stem(int64_t frame) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(frame));
  return buf;
}

}  // namespace cache_detail

inline std::string appearance_cache_path(const std::string& root, const std::string& recording_id,
                                         int64_t vehicle_id, int scale, int64_t frame) {
  return root + "/" + recording_id + "/" + std::to_string(vehicle_id) + "/" + std::to_string(scale) +
         "/" + cache_detail::frame_stem(frame) + ".npyish";
}

inline std::string flow_cache_path(const std::string& root, const std::string& recording_id,
                                   int64_t vehicle_id, int scale, int64_t frame) {
  return root + "/" + recording_id + "/" + std::to_string(vehicle_id) + "/" + std::to_string(scale) +
         "/flow/" + cache_detail::frame_stem(frame) + ".bin";
}

/// [H,W,C] float crop in [0,1] -> [C,H,W] bytes.
inline Tensor<uint8_t> quantize_appearance(const ImageF& img) {
  Tensor<uint8_t> t({img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const float v = std::min(1.0f, std::max(0.0f, img.at(y, x, c)));
        t.data[(static_cast<size_t>(c) * img.height + y) * img.width + x] =
            static_cast<uint8_t>(std::lround(v * 255.0f));
      }
  return t;
}

/// Clip to [-clip, clip], normalize to [-1, 1], quantize to int16. The
/// mapping is odd, so negating a displacement negates the stored value.
inline Tensor<int16_t> quantize_flow(const FlowField& f, float clip) {
  require(clip > 0.0f, "flow clip must be positive");
  Tensor<int16_t> t({2, f.height, f.width});
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) {
        const float v = std::min(clip, std::max(-clip, f.at(y, x, c))) / clip;
        t.data[(static_cast<size_t>(c) * f.height + y) * f.width + x] =
            static_cast<int16_t>(std::lround(v * 32767.0f));
      }
  return t;
}

struct ExtractCounts {
  int64_t appearance_files = 0;
  int64_t flow_files = 0;
};

/// Extracts every observed frame of every track at one scale. Crops are
/// recomputed per frame (the ROI follows the vehicle), resized once, and
/// shared between the appearance file and the flow pair so the two caches
/// always agree on geometry.
inline ExtractCounts extract_recording_cache(const Recording& rec, const std::string& recording_id,
                                             RoiScale scale, const std::string& cache_root,
                                             const ExtractConfig& cfg = {}) {
  namespace fs = std::filesystem;
  ExtractCounts counts;
  for (const auto& [vehicle_id, track] : rec.tracks) {
    const std::string dir =
        cache_root + "/" + recording_id + "/" + std::to_string(vehicle_id) + "/" + std::to_string(to_int(scale));
    fs::create_directories(dir + "/flow");
    for (const auto& [a, b] : track.contiguous_runs()) {
      ImageF prev_gray;
      for (int64_t f = a; f <= b; ++f) {
        const std::vector<Patch> patch = extract_roi_sequence(rec, vehicle_id, {f}, scale, recording_id);
        const ImageF resized = resize_bilinear(patch[0].image, cfg.input_size);
        write_tensor_file(appearance_cache_path(cache_root, recording_id, vehicle_id, to_int(scale), f),
                          quantize_appearance(resized));
        ++counts.appearance_files;
        ImageF gray = to_grayscale(resized);
        if (f > a) {
          const FlowField field = dense_flow(prev_gray, gray, cfg.flow_params);
          write_tensor_file(flow_cache_path(cache_root, recording_id, vehicle_id, to_int(scale), f - 1),
                            quantize_flow(field, cfg.flow_clip));
          ++counts.flow_files;
        }
        prev_gray = std::move(gray);
      }
    }
    MANEUVER_LOG_DEBUG("extracted %s vehicle %lld scale x%d", recording_id.c_str(),
                       static_cast<long long>(vehicle_id), to_int(scale));
  }
  return counts;
}

/// Extraction restricted to the frames some sample windows actually touch.
/// Appearance covers every window frame; flow covers every in-window pair.
/// Useful when windows are known up front: a manifest usually needs a small
/// slice of each track.
inline ExtractCounts extract_windows_cache(const Recording& rec, const std::string& recording_id,
                                           const std::vector<SampleWindow>& manifest,
                                           const std::string& cache_root, const ExtractConfig& cfg = {}) {
  namespace fs = std::filesystem;
  // (vehicle, scale) -> frames to crop / flow pairs to compute (by first frame)
  std::map<std::pair<int64_t, int>, std::pair<std::set<int64_t>, std::set<int64_t>>> needed;
  for (const auto& w : manifest) {
    if (w.recording_id != recording_id) continue;
    auto& [app, flow] = needed[{w.vehicle_id, w.scale}];
    for (int64_t f = w.start_frame; f <= w.end_frame; ++f) app.insert(f);
    for (int64_t f = w.start_frame; f < w.end_frame; ++f) flow.insert(f);
  }

  ExtractCounts counts;
  for (const auto& [key, frames] : needed) {
    const auto& [vehicle_id, scale] = key;
    const auto& [app_frames, flow_firsts] = frames;
    const std::string dir =
        cache_root + "/" + recording_id + "/" + std::to_string(vehicle_id) + "/" + std::to_string(scale);
    fs::create_directories(dir + "/flow");

    std::map<int64_t, ImageF> gray;
    for (int64_t f : app_frames) {
      const std::vector<Patch> patch =
          extract_roi_sequence(rec, vehicle_id, {f}, roi_scale_from_int(scale), recording_id);
      const ImageF resized = resize_bilinear(patch[0].image, cfg.input_size);
      write_tensor_file(appearance_cache_path(cache_root, recording_id, vehicle_id, scale, f),
                        quantize_appearance(resized));
      ++counts.appearance_files;
      gray.emplace(f, to_grayscale(resized));
    }
    for (int64_t f : flow_firsts) {
      require(gray.count(f) && gray.count(f + 1), "flow pair outside the extracted frame set");
      const FlowField field = dense_flow(gray.at(f), gray.at(f + 1), cfg.flow_params);
      write_tensor_file(flow_cache_path(cache_root, recording_id, vehicle_id, scale, f),
                        quantize_flow(field, cfg.flow_clip));
      ++counts.flow_files;
    }
  }
  return counts;
}

/// Loads cached tensors for sample windows and assembles model inputs.
/// Every file is read once and kept decoded in memory, so epoch loops after
/// the first are pure recompute. Single-threaded use only.
class ClipStore {
 public:
  explicit ClipStore(std::string cache_root) : root_(std::move(cache_root)) {}

  /// Clip for one window. `appearance_frames` / `flow_pairs` are the clip
  /// lengths the model wants (0 = native window length); `with_flow` off
  /// skips flow IO entirely. Frames are chosen by the shared temporal
  /// resampling rule.
  ClipSample<float> load(const SampleWindow& w, int appearance_frames, int flow_pairs, bool with_flow) const {
    const int64_t n = w.length();
    require(n >= 1, "window has no frames");
    const int64_t want_a = appearance_frames > 0 ? appearance_frames : n;
    ClipSample<float> clip;

    const std::vector<int64_t> a_idx = temporal_resample(n, want_a);
    const Tensor<uint8_t>& first = appearance_tensor(w, w.start_frame);
    const int64_t side = first.dim(1);
    clip.appearance = Tensor<float>({want_a, 3, side, side});
    for (int64_t k = 0; k < want_a; ++k) {
      const Tensor<uint8_t>& t = appearance_tensor(w, w.start_frame + a_idx[static_cast<size_t>(k)]);
      check_shape(t, {3, side, side}, "cached appearance frame");
      float* dst = clip.appearance.data.data() + k * 3 * side * side;
      for (size_t i = 0; i < t.data.size(); ++i) dst[i] = static_cast<float>(t.data[i]) / 255.0f - 0.5f;
    }

    if (with_flow) {
      require(n >= 2, "window too short for optical flow");
      const int64_t pairs = n - 1;
      const int64_t want_f = flow_pairs > 0 ? flow_pairs : pairs;
      const std::vector<int64_t> f_idx = temporal_resample(pairs, want_f);
      clip.flow = Tensor<float>({want_f, 2, side, side});
      for (int64_t k = 0; k < want_f; ++k) {
        const Tensor<int16_t>& t = flow_tensor(w, w.start_frame + f_idx[static_cast<size_t>(k)]);
        check_shape(t, {2, side, side}, "cached flow field");
        float* dst = clip.flow.data.data() + k * 2 * side * side;
        for (size_t i = 0; i < t.data.size(); ++i) dst[i] = static_cast<float>(t.data[i]) / 32767.0f;
      }
    }
    return clip;
  }

  ClipSample<float> load_for(const Model<float>& model, const SampleWindow& w) const {
    return load(w, model.appearance_frames_wanted(), model.flow_pairs_wanted(), model.uses_flow());
  }

  size_t resident_tensors() const { return appearance_.size() + flow_.size(); }

  void drop_cached() {
    appearance_.clear();
    flow_.clear();
  }

 private:
  static std::string window_name(const SampleWindow& w) {
    return "window " + w.recording_id + " vehicle " + std::to_string(w.vehicle_id) + " frames " +
           std::to_string(w.start_frame) + ".." + std::to_string(w.end_frame) + " scale x" +
           std::to_string(w.scale);
  }

  const Tensor<uint8_t>& appearance_tensor(const SampleWindow& w, int64_t frame) const {
    const std::string path = appearance_cache_path(root_, w.recording_id, w.vehicle_id, w.scale, frame);
    auto it = appearance_.find(path);
    if (it == appearance_.end()) {
      if (!std::filesystem::exists(path)) {
        io_error("appearance cache miss for frame " + std::to_string(frame) + " of " + window_name(w) +
                 " (expected " + path + "; run extract first)");
      }
      it = appearance_.emplace(path, read_tensor_file<uint8_t>(path)).first;
    }
    return it->second;
  }

  const Tensor<int16_t>& flow_tensor(const SampleWindow& w, int64_t frame) const {
    const std::string path = flow_cache_path(root_, w.recording_id, w.vehicle_id, w.scale, frame);
    auto it = flow_.find(path);
    if (it == flow_.end()) {
      if (!std::filesystem::exists(path)) {
        io_error("flow cache miss for pair " + std::to_string(frame) + "->" + std::to_string(frame + 1) +
                 " of " + window_name(w) + " (expected " + path + "; run extract first)");
      }
      it = flow_.emplace(path, read_tensor_file<int16_t>(path)).first;
    }
    return it->second;
  }

  std::string root_;
  mutable std::unordered_map<std::string, Tensor<uint8_t>> appearance_;
  mutable std::unordered_map<std::string, Tensor<int16_t>> flow_;
};

}  // namespace maneuver
