#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "maneuver/core/log.hpp"
#include "maneuver/ingest/types.hpp"
#include "maneuver/windowing/windowing.hpp"

namespace maneuver {

struct DatasetStats {
  int64_t sequence_count[kNumClasses] = {0, 0, 0};
  double mean_length[kNumClasses] = {0.0, 0.0, 0.0};
};

/// Counts maneuver sequences across recordings. A lane-change sequence is
/// the observed run up to and including its event frame; a lane-keeping
/// sequence is a maximal observed stretch at least `exclusion_margin` frames
/// away from every event (the same definition sample enumeration uses, via
/// lane_keeping_segments, so stats and training samples always agree).
inline DatasetStats dataset_stats(const std::vector<const Recording*>& recordings,
                                  int64_t exclusion_margin) {
  DatasetStats stats;
  int64_t total_length[kNumClasses] = {0, 0, 0};

  for (const Recording* rec : recordings) {
    for (const auto& ev : rec->events) {
      const int cls = static_cast<int>(ev.label);
      const TrackedVehicle& track = rec->track(ev.vehicle_id);
      int64_t length = 0;
      for (const auto& [a, b] : track.contiguous_runs()) {
        if (ev.event_frame >= a && ev.event_frame <= b) {
          length = ev.event_frame - a + 1;
          break;
        }
      }
      if (length == 0) {
        MANEUVER_LOG_WARN("event at frame %lld for vehicle %lld falls in a track gap",
                          static_cast<long long>(ev.event_frame),
                          static_cast<long long>(ev.vehicle_id));
      }
      stats.sequence_count[cls] += 1;
      total_length[cls] += length;
    }
    for (const auto& [vehicle_id, track] : rec->tracks) {
      (void)vehicle_id;
      for (const auto& [a, b] : lane_keeping_segments(track, rec->events, exclusion_margin)) {
        stats.sequence_count[0] += 1;
        total_length[0] += b - a + 1;
      }
    }
  }

  for (int c = 0; c < kNumClasses; ++c) {
    if (stats.sequence_count[c] > 0) {
      stats.mean_length[c] = static_cast<double>(total_length[c]) / static_cast<double>(stats.sequence_count[c]);
    }
  }
  return stats;
}

/// Dataset summary table, one column per class.
inline std::string render_stats_table(const DatasetStats& stats) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "%-12s %7s %7s %7s\n", "", "NLC", "LLC", "RLC");
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-12s %7lld %7lld %7lld\n", "sequences",
                static_cast<long long>(stats.sequence_count[0]),
                static_cast<long long>(stats.sequence_count[1]),
                static_cast<long long>(stats.sequence_count[2]));
  out += buf;
  std::snprintf(buf, sizeof(buf), "%-12s %7.1f %7.1f %7.1f\n", "mean frames", stats.mean_length[0],
                stats.mean_length[1], stats.mean_length[2]);
  out += buf;
  return out;
}

}  // namespace maneuver
