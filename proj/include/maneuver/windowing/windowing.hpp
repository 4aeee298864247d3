#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "maneuver/core/error.hpp"
#include "maneuver/core/log.hpp"
#include "maneuver/core/rng.hpp"
#include "maneuver/core/text.hpp"
#include "maneuver/ingest/types.hpp"
#include "maneuver/roi/roi.hpp"

namespace maneuver {

/// How samples are cut from a track. `observation_frames` (N) is the clip
/// length; `tte` is how many frames before the labeled event the window
/// ends: tte = 0 reproduces classification, tte > 0 is early prediction.
struct WindowSpec {
  int observation_frames = 20;
  int tte = 0;
  RoiScale scale = RoiScale::x2;

  void validate() const {
    if (observation_frames < 2) {
      validation_error("observation_frames must be at least 2 (optical flow needs a frame pair)");
    }
    if (tte < 0) validation_error("tte must be non-negative");
  }

  // The reference evaluation grid. Other values work but are flagged so a
  // run is never mistaken for a comparable one.
  bool paper_parity() const {
    const bool n_ok = observation_frames == 20 || observation_frames == 30 || observation_frames == 40;
    const bool tte_ok = tte == 0 || tte == 10 || tte == 20;
    return n_ok && tte_ok;
  }
};

struct SampleWindow {
  std::string recording_id;
  int64_t vehicle_id = 0;
  int64_t start_frame = 0;  // inclusive
  int64_t end_frame = 0;    // inclusive
  ClassLabel label = ClassLabel::NLC;
  int scale = 2;
  // Identity of the originating event (window end for lane keeping). Windows
  // sharing this key describe the same physical maneuver and must never be
  // split across train and validation.
  int64_t group_frame = 0;

  int64_t length() const { return end_frame - start_frame + 1; }
};

struct WindowSkip {
  int64_t vehicle_id = 0;
  int64_t event_frame = 0;
  std::string reason;
};

struct EnumerationResult {
  std::vector<SampleWindow> windows;
  std::vector<WindowSkip> skipped;
};

/// Window frame range for an event: the window ends `tte` frames before the
/// event and spans N frames, inclusive on both ends.
inline std::pair<int64_t, int64_t> window_indices(int64_t event_frame, const WindowSpec& spec) {
  spec.validate();
  const int64_t end = event_frame - spec.tte;
  const int64_t start = end - spec.observation_frames + 1;
  return {start, end};
}

inline bool track_covers(const TrackedVehicle& track, int64_t start, int64_t end) {
  for (int64_t f = start; f <= end; ++f) {
    if (!track.find(f)) return false;
  }
  return true;
}

/// One window per labeled event. Events whose window would start before the
/// track (or cross a detection gap) are skipped with a reason rather than
/// silently dropped, so dataset accounting stays auditable.
inline EnumerationResult enumerate_event_samples(const Recording& rec, const std::string& recording_id,
                                                 const WindowSpec& spec) {
  spec.validate();
  if (!spec.paper_parity()) {
    MANEUVER_LOG_WARN("window spec N=%d tte=%d is outside the reference grid", spec.observation_frames,
                      spec.tte);
  }
  EnumerationResult out;
  for (const auto& ev : rec.events) {
    const auto [start, end] = window_indices(ev.event_frame, spec);
    const TrackedVehicle& track = rec.track(ev.vehicle_id);
    if (start < 0) {
      out.skipped.push_back({ev.vehicle_id, ev.event_frame, "window starts before frame 0"});
      continue;
    }
    if (end >= rec.frame_count()) {
      out.skipped.push_back({ev.vehicle_id, ev.event_frame, "window ends past the last frame"});
      continue;
    }
    if (track.empty() || start < track.first_frame() || end > track.last_frame() ||
        !track_covers(track, start, end)) {
      out.skipped.push_back({ev.vehicle_id, ev.event_frame, "track does not cover the window"});
      continue;
    }
    SampleWindow w;
    w.recording_id = recording_id;
    w.vehicle_id = ev.vehicle_id;
    w.start_frame = start;
    w.end_frame = end;
    w.label = ev.label;
    w.scale = to_int(spec.scale);
    w.group_frame = ev.event_frame;
    out.windows.push_back(w);
  }
  return out;
}

/// Maximal stretches of a track that sit at least `exclusion_margin` frames
/// away from every labeled event of that vehicle. Both the lane-keeping
/// sample enumerator and the dataset statistics use this as the definition
/// of a lane-keeping sequence.
inline std::vector<std::pair<int64_t, int64_t>> lane_keeping_segments(
    const TrackedVehicle& track, const std::vector<ManeuverEvent>& events, int64_t exclusion_margin) {
  std::vector<std::pair<int64_t, int64_t>> segments = track.contiguous_runs();
  for (const auto& ev : events) {
    if (ev.vehicle_id != track.vehicle_id) continue;
    const int64_t lo = ev.event_frame - exclusion_margin;
    const int64_t hi = ev.event_frame + exclusion_margin;
    std::vector<std::pair<int64_t, int64_t>> next;
    for (const auto& [a, b] : segments) {
      if (hi < a || lo > b) {
        next.push_back({a, b});
        continue;
      }
      if (a < lo) next.push_back({a, lo - 1});
      if (b > hi) next.push_back({hi + 1, b});
    }
    segments = std::move(next);
  }
  return segments;
}

/// Lane-keeping windows: slide a length-N window through each lane-keeping
/// segment with the given stride. The exclusion margin keeps pre- and
/// post-maneuver frames out of the negative class.
inline EnumerationResult enumerate_nlc_samples(const Recording& rec, const std::string& recording_id,
                                               const WindowSpec& spec, int64_t stride,
                                               int64_t exclusion_margin) {
  spec.validate();
  if (stride < 1) validation_error("nlc stride must be at least 1");
  if (exclusion_margin < 0) validation_error("nlc exclusion margin must be non-negative");
  EnumerationResult out;
  const int64_t n = spec.observation_frames;
  for (const auto& [vehicle_id, track] : rec.tracks) {
    const auto segments = lane_keeping_segments(track, rec.events, exclusion_margin);
    for (const auto& [a, b] : segments) {
      for (int64_t end = a + n - 1; end <= b; end += stride) {
        SampleWindow w;
        w.recording_id = recording_id;
        w.vehicle_id = vehicle_id;
        w.start_frame = end - n + 1;
        w.end_frame = end;
        w.label = ClassLabel::NLC;
        w.scale = to_int(spec.scale);
        w.group_frame = end;
        out.windows.push_back(w);
      }
    }
  }
  return out;
}

struct SplitAssignment {
  std::vector<SampleWindow> train;
  std::vector<SampleWindow> val;
  uint64_t seed = 0;
};

/// Class-stratified, group-aware split. Groups (same recording + vehicle +
/// originating event) stay intact; within each class, whole groups are
/// shuffled and moved to validation until the class hits its target count.
/// With single-window groups the per-class validation count is exact.
inline SplitAssignment stratified_split(const std::vector<SampleWindow>& windows, double val_fraction,
                                        uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) {
    validation_error("val_fraction must be in [0, 1)");
  }
  using GroupKey = std::tuple<std::string, int64_t, int64_t, int>;
  std::map<GroupKey, std::vector<SampleWindow>> groups;
  for (const auto& w : windows) {
    groups[{w.recording_id, w.vehicle_id, w.group_frame, static_cast<int>(w.label)}].push_back(w);
  }

  SplitAssignment split;
  split.seed = seed;
  Rng root(splitmix64(seed ^ 0x53504C4954ULL));
  for (int cls = 0; cls < kNumClasses; ++cls) {
    std::vector<const std::vector<SampleWindow>*> class_groups;
    int64_t class_total = 0;
    for (const auto& [key, members] : groups) {
      if (std::get<3>(key) != cls) continue;
      class_groups.push_back(&members);
      class_total += static_cast<int64_t>(members.size());
    }
    // groups map iteration is sorted by key, so the shuffle below sees a
    // canonical order and the split is invariant to input ordering.
    Rng rng = root.substream(static_cast<uint64_t>(cls));
    rng.shuffle(class_groups);
    const int64_t target = std::llround(val_fraction * static_cast<double>(class_total));
    int64_t val_count = 0;
    for (const auto* members : class_groups) {
      auto& dest = val_count < target ? split.val : split.train;
      if (val_count < target) val_count += static_cast<int64_t>(members->size());
      dest.insert(dest.end(), members->begin(), members->end());
    }
  }
  return split;
}

/// Index resampling to a fixed clip length: idx[k] = floor(k * len / target).
/// Monotonic, starts at 0, never exceeds len - 1; upsampling repeats frames.
inline std::vector<int64_t> temporal_resample(int64_t source_len, int64_t target_len) {
  if (source_len < 1) validation_error("temporal_resample: empty source");
  if (target_len < 1) validation_error("temporal_resample: empty target");
  std::vector<int64_t> idx(static_cast<size_t>(target_len));
  for (int64_t k = 0; k < target_len; ++k) {
    idx[static_cast<size_t>(k)] = k * source_len / target_len;
  }
  return idx;
}

// Manifest files: one sample window per line.
//   recording,vehicle_id,start,end,label,scale

inline std::string manifest_to_csv(const std::vector<SampleWindow>& rows) {
  std::string out = "recording,vehicle_id,start,end,label,scale\n";
  for (const auto& w : rows) {
    out += w.recording_id + "," + std::to_string(w.vehicle_id) + "," + std::to_string(w.start_frame) +
           "," + std::to_string(w.end_frame) + "," + to_string(w.label) + "," + std::to_string(w.scale) +
           "\n";
  }
  return out;
}

inline std::vector<SampleWindow> manifest_from_csv(const std::string& content, const std::string& what) {
  std::vector<SampleWindow> rows;
  const auto lines = split_lines(content);
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    const std::string& line = lines[ln];
    if (line.empty()) continue;
    if (ln == 0 && line.rfind("recording", 0) == 0) continue;
    const auto fields = split(line, ',');
    const std::string where = what + " line " + std::to_string(ln + 1);
    if (fields.size() != 6) format_error(where + ": expected 6 fields");
    SampleWindow w;
    w.recording_id = fields[0];
    w.vehicle_id = parse_int(fields[1], where);
    w.start_frame = parse_int(fields[2], where);
    w.end_frame = parse_int(fields[3], where);
    w.label = class_label_from_string(trim(fields[4]));
    w.scale = static_cast<int>(parse_int(fields[5], where));
    if (w.end_frame < w.start_frame) format_error(where + ": end before start");
    roi_scale_from_int(w.scale);
    w.group_frame = w.end_frame;
    rows.push_back(w);
  }
  return rows;
}

inline void write_manifest(const std::string& path, const std::vector<SampleWindow>& rows) {
  write_text_file(path, manifest_to_csv(rows));
}

inline std::vector<SampleWindow> read_manifest(const std::string& path) {
  return manifest_from_csv(read_text_file(path), path);
}

}  // namespace maneuver
