#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "maneuver/core/error.hpp"
#include "maneuver/core/image_io.hpp"
#include "maneuver/core/log.hpp"
#include "maneuver/core/text.hpp"
#include "maneuver/ingest/types.hpp"

namespace maneuver {

// On-disk recording layout:
//   <dir>/meta.json            frame_rate, width, height
//   <dir>/frames/000000.png    one PNG per frame, consecutive from zero
//   <dir>/tracks.csv           frame,vehicle_id,x0,y0,x1,y1,...
//   <dir>/events.csv           vehicle_id,label,event_frame
// Contour coordinates are written with 17 significant digits so parsing a
// written recording reproduces the doubles exactly.

inline std::string frame_file_name(int64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06lld.png", static_cast<long long>(index));
  return buf;
}

class DirFrameSource : public FrameSource {
 public:
  DirFrameSource(std::string dir, int64_t count, int width, int height)
      : dir_(std::move(dir)), count_(count), width_(width), height_(height) {}

  int64_t frame_count() const override { return count_; }
  int width() const override { return width_; }
  int height() const override { return height_; }

  ImageU8 frame(int64_t index) const override {
    if (index < 0 || index >= count_) {
      internal_error("frame index " + std::to_string(index) + " out of range for " + dir_);
    }
    for (const auto& [idx, img] : cache_) {
      if (idx == index) return img;
    }
    ImageU8 img = read_png(dir_ + "/frames/" + frame_file_name(index));
    if (img.width != width_ || img.height != height_) {
      validation_error("frame " + std::to_string(index) + " in " + dir_ + " is " +
                       std::to_string(img.width) + "x" + std::to_string(img.height) +
                       " but recording is " + std::to_string(width_) + "x" + std::to_string(height_));
    }
    if (cache_.size() >= 4) cache_.erase(cache_.begin());
    cache_.emplace_back(index, img);
    return img;
  }

 private:
  std::string dir_;
  int64_t count_;
  int width_;
  int height_;
  // Tiny decode cache; consecutive windows touch overlapping frames.
  mutable std::vector<std::pair<int64_t, ImageU8>> cache_;
};

inline Recording parse_recording(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) format_error("recording directory not found: " + dir);
  const std::string meta_path = dir + "/meta.json";
  if (!fs::exists(meta_path)) format_error("missing meta.json in " + dir);
  if (!fs::exists(dir + "/tracks.csv")) format_error("missing tracks.csv in " + dir);
  if (!fs::exists(dir + "/events.csv")) format_error("missing events.csv in " + dir);

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_text_file(meta_path));
  } catch (const nlohmann::json::exception& e) {
    format_error(meta_path + ": " + e.what());
  }
  double frame_rate = 0.0;
  int width = 0, height = 0;
  try {
    frame_rate = meta.at("frame_rate").get<double>();
    width = meta.at("width").get<int>();
    height = meta.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    format_error(meta_path + ": " + e.what());
  }

  // Frames must be consecutive from zero; a gap is a malformed recording.
  const std::string frames_dir = dir + "/frames";
  if (!fs::is_directory(frames_dir)) format_error("missing frames/ in " + dir);
  int64_t count = 0;
  for (const auto& entry : fs::directory_iterator(frames_dir)) {
    if (entry.path().extension() == ".png") ++count;
  }
  if (count == 0) format_error("no frames in " + frames_dir);
  for (int64_t i = 0; i < count; ++i) {
    if (!fs::exists(frames_dir + "/" + frame_file_name(i))) {
      format_error("frame sequence has a gap: missing " + frame_file_name(i) + " in " + frames_dir);
    }
  }

  Recording rec;
  rec.frame_rate = frame_rate;
  rec.frames = std::make_shared<DirFrameSource>(dir, count, width, height);

  {
    ImageU8 first = rec.frames->frame(0);
    if (first.width != width || first.height != height) {
      validation_error(dir + ": meta.json size disagrees with decoded frames");
    }
  }

  const auto track_lines = split_lines(read_text_file(dir + "/tracks.csv"));
  std::map<std::pair<int64_t, int64_t>, bool> seen;
  for (size_t ln = 0; ln < track_lines.size(); ++ln) {
    const std::string& line = track_lines[ln];
    if (line.empty()) continue;
    if (ln == 0 && line.rfind("frame", 0) == 0) continue;  // header
    const auto fields = split(line, ',');
    const std::string where = dir + "/tracks.csv line " + std::to_string(ln + 1);
    if (fields.size() < 2) format_error(where + ": expected frame,vehicle_id,coordinates");
    const int64_t frame = parse_int(fields[0], where);
    const int64_t vehicle = parse_int(fields[1], where);
    const size_t ncoord = fields.size() - 2;
    if (ncoord % 2 != 0) format_error(where + ": odd number of contour coordinates");
    if (ncoord < 6) {
      validation_error("vehicle " + std::to_string(vehicle) + " frame " + std::to_string(frame) +
                       ": contour has " + std::to_string(ncoord / 2) + " points, need at least 3");
    }
    if (seen.count({frame, vehicle})) {
      validation_error("duplicate observation for vehicle " + std::to_string(vehicle) +
                       " at frame " + std::to_string(frame));
    }
    seen[{frame, vehicle}] = true;
    ContourObservation obs;
    obs.frame_index = frame;
    for (size_t i = 0; i + 1 < ncoord; i += 2) {
      obs.contour.push_back({parse_double(fields[2 + i], where), parse_double(fields[3 + i], where)});
    }
    auto& track = rec.tracks[vehicle];
    track.vehicle_id = vehicle;
    track.observations.push_back(std::move(obs));
  }
  for (auto& [id, track] : rec.tracks) {
    (void)id;
    std::sort(track.observations.begin(), track.observations.end(),
              [](const ContourObservation& a, const ContourObservation& b) {
                return a.frame_index < b.frame_index;
              });
  }

  const auto event_lines = split_lines(read_text_file(dir + "/events.csv"));
  for (size_t ln = 0; ln < event_lines.size(); ++ln) {
    const std::string& line = event_lines[ln];
    if (line.empty()) continue;
    if (ln == 0 && line.rfind("vehicle_id", 0) == 0) continue;
    const auto fields = split(line, ',');
    const std::string where = dir + "/events.csv line " + std::to_string(ln + 1);
    if (fields.size() != 3) format_error(where + ": expected vehicle_id,label,event_frame");
    ManeuverEvent ev;
    ev.vehicle_id = parse_int(fields[0], where);
    ev.label = class_label_from_string(trim(fields[1]));
    ev.event_frame = parse_int(fields[2], where);
    rec.events.push_back(ev);
  }

  rec.validate();
  return rec;
}

inline void write_recording(const Recording& rec, const std::string& dir) {
  namespace fs = std::filesystem;
  rec.validate();
  fs::create_directories(dir + "/frames");

  nlohmann::json meta = {
      {"frame_rate", rec.frame_rate},
      {"width", rec.frames->width()},
      {"height", rec.frames->height()},
  };
  write_text_file(dir + "/meta.json", meta.dump(2) + "\n");

  const int64_t n = rec.frame_count();
  for (int64_t i = 0; i < n; ++i) {
    write_png(dir + "/frames/" + frame_file_name(i), rec.frames->frame(i));
    if (i % 50 == 49) MANEUVER_LOG_DEBUG("wrote %lld/%lld frames", static_cast<long long>(i + 1), static_cast<long long>(n));
  }

  std::string tracks = "frame,vehicle_id,x0,y0,...\n";
  for (const auto& [id, track] : rec.tracks) {
    for (const auto& obs : track.observations) {
      tracks += std::to_string(obs.frame_index) + "," + std::to_string(id);
      for (const auto& p : obs.contour) {
        tracks += "," + format_double(p.x) + "," + format_double(p.y);
      }
      tracks += "\n";
    }
  }
  write_text_file(dir + "/tracks.csv", tracks);

  std::string events = "vehicle_id,label,event_frame\n";
  for (const auto& ev : rec.events) {
    events += std::to_string(ev.vehicle_id) + "," + to_string(ev.label) + "," +
              std::to_string(ev.event_frame) + "\n";
  }
  write_text_file(dir + "/events.csv", events);
}

}  // namespace maneuver
