#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "maneuver/core/error.hpp"
#include "maneuver/core/geometry.hpp"
#include "maneuver/core/image.hpp"

namespace maneuver {

// Sample classes. NLC = lane keeping, LLC/RLC = left/right lane change.
// The integer values double as class indices in model outputs and
// confusion matrices, so they are fixed.
enum class ClassLabel : int { NLC = 0, LLC = 1, RLC = 2 };

inline const char* to_string(ClassLabel c) {
  switch (c) {
    case ClassLabel::NLC: return "NLC";
    case ClassLabel::LLC: return "LLC";
    case ClassLabel::RLC: return "RLC";
  }
  return "?";
}

inline ClassLabel class_label_from_string(const std::string& s) {
  if (s == "NLC") return ClassLabel::NLC;
  if (s == "LLC") return ClassLabel::LLC;
  if (s == "RLC") return ClassLabel::RLC;
  format_error("unknown class label '" + s + "'");
}

constexpr int kNumClasses = 3;

// One detected vehicle contour in one frame. Contours come from an upstream
// detector and are stored as sub-pixel polygon vertices in image coordinates.
struct ContourObservation {
  int64_t frame_index = 0;
  std::vector<Point2d> contour;
};

struct TrackedVehicle {
  int64_t vehicle_id = 0;
  // Sorted by frame_index, at most one observation per frame.
  std::vector<ContourObservation> observations;

  bool empty() const { return observations.empty(); }
  int64_t first_frame() const { return observations.front().frame_index; }
  int64_t last_frame() const { return observations.back().frame_index; }

  const ContourObservation* find(int64_t frame) const {
    auto it = std::lower_bound(observations.begin(), observations.end(), frame,
                               [](const ContourObservation& o, int64_t f) { return o.frame_index < f; });
    if (it == observations.end() || it->frame_index != frame) return nullptr;
    return &*it;
  }

  // Maximal runs of consecutive frames, inclusive [begin, end] pairs.
  std::vector<std::pair<int64_t, int64_t>> contiguous_runs() const {
    std::vector<std::pair<int64_t, int64_t>> runs;
    for (const auto& obs : observations) {
      if (!runs.empty() && runs.back().second + 1 == obs.frame_index) {
        runs.back().second = obs.frame_index;
      } else {
        runs.push_back({obs.frame_index, obs.frame_index});
      }
    }
    return runs;
  }
};

// A labeled lane change: the frame where the middle of the rear bumper is
// first past the lane marking. NLC has no events; only LLC/RLC appear here.
struct ManeuverEvent {
  int64_t vehicle_id = 0;
  ClassLabel label = ClassLabel::LLC;
  int64_t event_frame = 0;
};

// Frame access abstraction. Directory-backed recordings decode PNGs lazily;
// synthetic recordings render frames on demand. Both are pure functions of
// their construction arguments.
class FrameSource {
 public:
  virtual ~FrameSource() = default;
  virtual int64_t frame_count() const = 0;
  virtual int width() const = 0;
  virtual int height() const = 0;
  virtual ImageU8 frame(int64_t index) const = 0;
};

class MemoryFrameSource : public FrameSource {
 public:
  explicit MemoryFrameSource(std::vector<ImageU8> frames) : frames_(std::move(frames)) {
    require(!frames_.empty(), "MemoryFrameSource: no frames");
  }
  int64_t frame_count() const override { return static_cast<int64_t>(frames_.size()); }
  int width() const override { return frames_.front().width; }
  int height() const override { return frames_.front().height; }
  ImageU8 frame(int64_t index) const override {
    require(index >= 0 && index < frame_count(), "frame index out of range");
    return frames_[static_cast<size_t>(index)];
  }

 private:
  std::vector<ImageU8> frames_;
};

struct Recording {
  std::shared_ptr<const FrameSource> frames;
  double frame_rate = 0.0;
  std::map<int64_t, TrackedVehicle> tracks;
  std::vector<ManeuverEvent> events;

  int64_t frame_count() const { return frames ? frames->frame_count() : 0; }

  const TrackedVehicle& track(int64_t vehicle_id) const {
    auto it = tracks.find(vehicle_id);
    if (it == tracks.end()) validation_error("unknown vehicle id " + std::to_string(vehicle_id));
    return it->second;
  }

  // Structural invariants shared by parsed and generated recordings.
  void validate() const {
    if (!frames) validation_error("recording has no frame source");
    if (!(frame_rate > 0)) validation_error("frame rate must be positive");
    const int64_t n = frame_count();
    for (const auto& [id, track] : tracks) {
      if (track.vehicle_id != id) internal_error("track map key mismatch");
      int64_t prev = -1;
      for (const auto& obs : track.observations) {
        if (obs.frame_index < 0 || obs.frame_index >= n) {
          validation_error("vehicle " + std::to_string(id) + " observed at frame " +
                           std::to_string(obs.frame_index) + " outside recording of " +
                           std::to_string(n) + " frames");
        }
        if (obs.frame_index <= prev) {
          validation_error("vehicle " + std::to_string(id) +
                           ": duplicate or unsorted observation at frame " +
                           std::to_string(obs.frame_index));
        }
        prev = obs.frame_index;
        if (obs.contour.size() < 3) {
          validation_error("vehicle " + std::to_string(id) + " frame " +
                           std::to_string(obs.frame_index) + ": contour has " +
                           std::to_string(obs.contour.size()) + " points, need at least 3");
        }
      }
    }
    for (const auto& ev : events) {
      if (ev.label == ClassLabel::NLC) {
        validation_error("event for vehicle " + std::to_string(ev.vehicle_id) +
                         " has label NLC; events must be LLC or RLC");
      }
      auto it = tracks.find(ev.vehicle_id);
      if (it == tracks.end()) {
        validation_error("event references unknown vehicle " + std::to_string(ev.vehicle_id));
      }
      const TrackedVehicle& t = it->second;
      if (t.empty() || ev.event_frame < t.first_frame() || ev.event_frame > t.last_frame()) {
        validation_error("event at frame " + std::to_string(ev.event_frame) + " for vehicle " +
                         std::to_string(ev.vehicle_id) + " lies outside its observed range");
      }
    }
  }
};

}  // namespace maneuver
