#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "maneuver/core/error.hpp"
#include "maneuver/core/rng.hpp"
#include "maneuver/ingest/types.hpp"

namespace maneuver {

// Procedural highway scenes: a scrolling textured road with dashed lane
// markings and rigid textured vehicles, one per horizontal band so boxes
// never overlap. Vehicles either keep their lane (small sinusoidal wander)
// or execute a lane change with a trapezoidal lateral velocity profile.
//
// Everything is a pure function of (config, seed): frames are rendered on
// demand and re-rendering any frame is bit-identical.

struct SynthConfig {
  int64_t frame_count = 110;
  double frame_rate = 10.0;

  int num_lanes = 4;
  int lane_width = 48;
  int margin_x = 28;        // road shoulder on each side; image width is derived
  int height = 212;
  double marking_width = 3.0;
  double dash_period = 22.0;
  double dash_length = 13.0;
  bool render_markings = true;

  int vehicle_width = 40;
  int vehicle_height = 30;
  int row0_y = 62;          // bottom edge of the first vehicle band
  int row_spacing = 48;

  int nlc_count = 1;
  int llc_count = 1;
  int rlc_count = 1;

  // Sampling ranges, inclusive of both ends.
  double scroll_speed_min = 2.0, scroll_speed_max = 3.0;   // px/frame, road moving down
  double lc_speed_min = 0.75, lc_speed_max = 0.95;         // lateral cruise px/frame
  int lc_ramp_frames = 8;
  double nlc_amplitude_min = 2.0, nlc_amplitude_max = 5.0; // lane-keeping wander, px
  double nlc_period_min = 40.0, nlc_period_max = 80.0;     // wander period, frames
  double start_jitter = 3.0;                               // initial offset from lane center, px
  // Lane-change crossings are steered into this frame range so downstream
  // windowing always has history before the event.
  int64_t event_frame_min = 60;
  int64_t event_frame_max = 68;

  int width() const { return 2 * margin_x + num_lanes * lane_width; }
  double marking_x(int boundary) const { return margin_x + boundary * double(lane_width); }
  double lane_center(int lane) const { return margin_x + (lane + 0.5) * lane_width; }
  double row_y(int row) const { return row0_y + row * double(row_spacing); }

  int row_capacity() const {
    int rows = 0;
    while (row0_y + rows * row_spacing <= height - 6) ++rows;
    return rows;
  }

  void validate() const {
    if (frame_count <= 0) config_error("frame_count must be at least 1");
    if (!(frame_rate > 0)) config_error("frame_rate must be positive");
    if (nlc_count < 0 || llc_count < 0 || rlc_count < 0) config_error("scenario counts must be non-negative");
    const int total = nlc_count + llc_count + rlc_count;
    if (total <= 0) config_error("need at least one vehicle scenario");
    if (num_lanes < 1) config_error("need at least one lane");
    if ((llc_count > 0 || rlc_count > 0) && num_lanes < 2) {
      config_error("lane changes need at least two lanes");
    }
    if (lane_width < 16) config_error("lane_width too small");
    if (vehicle_width < 8 || vehicle_height < 8) config_error("vehicle dimensions too small");
    if (vehicle_width > lane_width) config_error("vehicle wider than lane");
    if (total > row_capacity()) {
      config_error("too many scenarios: " + std::to_string(total) + " vehicles but only " +
                   std::to_string(row_capacity()) + " bands fit in height " + std::to_string(height));
    }
    if (lc_ramp_frames < 1) config_error("lc_ramp_frames must be at least 1");
    if (!(lc_speed_min > 0) || lc_speed_max < lc_speed_min) config_error("bad lc_speed range");
    if (lc_speed_max > 1.0) {
      config_error("lc_speed_max must stay <= 1 px/frame so the labeled crossing frame is sub-pixel exact");
    }
    if (event_frame_min > event_frame_max) config_error("bad event_frame range");
  }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{
      {"frame_count", c.frame_count},
      {"frame_rate", c.frame_rate},
      {"num_lanes", c.num_lanes},
      {"lane_width", c.lane_width},
      {"margin_x", c.margin_x},
      {"height", c.height},
      {"marking_width", c.marking_width},
      {"dash_period", c.dash_period},
      {"dash_length", c.dash_length},
      {"render_markings", c.render_markings},
      {"vehicle_width", c.vehicle_width},
      {"vehicle_height", c.vehicle_height},
      {"row0_y", c.row0_y},
      {"row_spacing", c.row_spacing},
      {"nlc_count", c.nlc_count},
      {"llc_count", c.llc_count},
      {"rlc_count", c.rlc_count},
      {"scroll_speed", {c.scroll_speed_min, c.scroll_speed_max}},
      {"lc_speed", {c.lc_speed_min, c.lc_speed_max}},
      {"lc_ramp_frames", c.lc_ramp_frames},
      {"nlc_amplitude", {c.nlc_amplitude_min, c.nlc_amplitude_max}},
      {"nlc_period", {c.nlc_period_min, c.nlc_period_max}},
      {"start_jitter", c.start_jitter},
      {"event_frame_window", {c.event_frame_min, c.event_frame_max}},
  };
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  SynthConfig c;
  auto range = [&](const char* key, double& lo, double& hi) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2) config_error(std::string(key) + ": expected [lo, hi]");
    lo = v[0].get<double>();
    hi = v[1].get<double>();
  };
  try {
    for (const auto& [key, value] : j.items()) {
      static const std::vector<std::string> known = {
          "frame_count", "frame_rate", "num_lanes", "lane_width", "margin_x", "height",
          "marking_width", "dash_period", "dash_length", "render_markings", "vehicle_width",
          "vehicle_height", "row0_y", "row_spacing", "nlc_count", "llc_count", "rlc_count",
          "scroll_speed", "lc_speed", "lc_ramp_frames", "nlc_amplitude", "nlc_period",
          "start_jitter", "event_frame_window"};
      if (std::find(known.begin(), known.end(), key) == known.end()) {
        config_error("unknown scenario config key '" + key + "'");
      }
      (void)value;
    }
    if (j.contains("frame_count")) c.frame_count = j.at("frame_count").get<int64_t>();
    if (j.contains("frame_rate")) c.frame_rate = j.at("frame_rate").get<double>();
    if (j.contains("num_lanes")) c.num_lanes = j.at("num_lanes").get<int>();
    if (j.contains("lane_width")) c.lane_width = j.at("lane_width").get<int>();
    if (j.contains("margin_x")) c.margin_x = j.at("margin_x").get<int>();
    if (j.contains("height")) c.height = j.at("height").get<int>();
    if (j.contains("marking_width")) c.marking_width = j.at("marking_width").get<double>();
    if (j.contains("dash_period")) c.dash_period = j.at("dash_period").get<double>();
    if (j.contains("dash_length")) c.dash_length = j.at("dash_length").get<double>();
    if (j.contains("render_markings")) c.render_markings = j.at("render_markings").get<bool>();
    if (j.contains("vehicle_width")) c.vehicle_width = j.at("vehicle_width").get<int>();
    if (j.contains("vehicle_height")) c.vehicle_height = j.at("vehicle_height").get<int>();
    if (j.contains("row0_y")) c.row0_y = j.at("row0_y").get<int>();
    if (j.contains("row_spacing")) c.row_spacing = j.at("row_spacing").get<int>();
    if (j.contains("nlc_count")) c.nlc_count = j.at("nlc_count").get<int>();
    if (j.contains("llc_count")) c.llc_count = j.at("llc_count").get<int>();
    if (j.contains("rlc_count")) c.rlc_count = j.at("rlc_count").get<int>();
    range("scroll_speed", c.scroll_speed_min, c.scroll_speed_max);
    range("lc_speed", c.lc_speed_min, c.lc_speed_max);
    if (j.contains("lc_ramp_frames")) c.lc_ramp_frames = j.at("lc_ramp_frames").get<int>();
    range("nlc_amplitude", c.nlc_amplitude_min, c.nlc_amplitude_max);
    range("nlc_period", c.nlc_period_min, c.nlc_period_max);
    if (j.contains("start_jitter")) c.start_jitter = j.at("start_jitter").get<double>();
    if (j.contains("event_frame_window")) {
      const auto& v = j.at("event_frame_window");
      if (!v.is_array() || v.size() != 2) config_error("event_frame_window: expected [lo, hi]");
      c.event_frame_min = v[0].get<int64_t>();
      c.event_frame_max = v[1].get<int64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    config_error(std::string("scenario config: ") + e.what());
  }
  return c;
}

namespace synth_detail {

// Stateless 2-D lattice hash -> [0, 1).
inline double lattice(uint64_t seed, int64_t ix, int64_t iy) {
  const uint64_t h = splitmix64(splitmix64(seed ^ static_cast<uint64_t>(ix)) ^ static_cast<uint64_t>(iy));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double smooth(double f) { return f * f * (3.0 - 2.0 * f); }

inline double value_noise(uint64_t seed, double x, double y, double scale) {
  const double gx = x / scale;
  const double gy = y / scale;
  const double fx = gx - std::floor(gx);
  const double fy = gy - std::floor(gy);
  const int64_t ix = static_cast<int64_t>(std::floor(gx));
  const int64_t iy = static_cast<int64_t>(std::floor(gy));
  const double wx = smooth(fx);
  const double wy = smooth(fy);
  const double v00 = lattice(seed, ix, iy);
  const double v10 = lattice(seed, ix + 1, iy);
  const double v01 = lattice(seed, ix, iy + 1);
  const double v11 = lattice(seed, ix + 1, iy + 1);
  const double top = v00 + (v10 - v00) * wx;
  const double bot = v01 + (v11 - v01) * wx;
  return top + (bot - top) * wy;
}

// Two octaves give the flow estimator enough texture at both coarse and
// fine pyramid levels.
inline double texture(uint64_t seed, double x, double y, double scale) {
  return 0.65 * value_noise(seed, x, y, scale) +
         0.35 * value_noise(seed ^ 0xA5A5A5A5DEADBEEFULL, x, y, scale * 0.37);
}

struct Scenario {
  int64_t vehicle_id = 0;
  ClassLabel label = ClassLabel::NLC;
  double row_y = 0.0;             // bottom edge of the vehicle
  std::vector<double> x;          // bottom-center x per frame
  int64_t event_frame = -1;       // -1 for NLC
  double marking_x = 0.0;         // crossed boundary centerline (LC only)
  uint64_t texture_seed = 0;
  double base_r = 0.5, base_g = 0.5, base_b = 0.5;
};

}  // namespace synth_detail

class SynthFrameSource : public FrameSource {
 public:
  SynthFrameSource(SynthConfig config, uint64_t seed, std::vector<synth_detail::Scenario> scenarios,
                   double scroll_speed)
      : config_(std::move(config)),
        scenarios_(std::move(scenarios)),
        scroll_speed_(scroll_speed),
        road_seed_(splitmix64(seed ^ 0x526F6164ULL)) {}

  int64_t frame_count() const override { return config_.frame_count; }
  int width() const override { return config_.width(); }
  int height() const override { return config_.height; }

  ImageU8 frame(int64_t index) const override {
    require(index >= 0 && index < config_.frame_count, "synthetic frame index out of range");
    using synth_detail::texture;
    const int w = width();
    const int h = height();
    ImageU8 img(w, h, 3);
    const double scroll = scroll_speed_ * static_cast<double>(index);
    const double mw = config_.marking_width;

    for (int py = 0; py < h; ++py) {
      const double yc = py + 0.5;
      const double road_y = yc - scroll;  // road content moves down the image
      for (int px = 0; px < w; ++px) {
        const double xc = px + 0.5;
        const double n = texture(road_seed_, xc, road_y, 9.0);
        double r = 0.32 + 0.30 * n;
        double g = r;
        double b = r;
        if (xc < config_.margin_x - 4 || xc > w - config_.margin_x + 4) {
          r *= 0.55;
          g *= 0.55;
          b *= 0.55;
        }
        if (config_.render_markings) {
          for (int m = 0; m <= config_.num_lanes; ++m) {
            const double mx = config_.marking_x(m);
            if (std::abs(xc - mx) <= mw * 0.5) {
              const double phase = road_y - std::floor(road_y / config_.dash_period) * config_.dash_period;
              if (phase < config_.dash_length) {
                r = g = b = 0.92 - 0.05 * n;
              }
              break;
            }
          }
        }
        img.at(py, px, 0) = quantize(r);
        img.at(py, px, 1) = quantize(g);
        img.at(py, px, 2) = quantize(b);
      }
    }

    for (const auto& s : scenarios_) {
      paint_vehicle(img, s, index);
    }
    return img;
  }

 private:
  uint8_t quantize(double v) const {
    // Floor at 0.05 keeps every rendered pixel strictly positive, so a zero
    // pixel in a cropped patch always means out-of-frame padding.
    const double c = std::min(0.98, std::max(0.05, v));
    return static_cast<uint8_t>(std::llround(255.0 * c));
  }

  void paint_vehicle(ImageU8& img, const synth_detail::Scenario& s, int64_t index) const {
    using synth_detail::texture;
    const double cx = s.x[static_cast<size_t>(index)];
    const double bottom = s.row_y;
    const double top = bottom - config_.vehicle_height;
    const double left = cx - config_.vehicle_width * 0.5;
    const double right = cx + config_.vehicle_width * 0.5;

    const int y0 = std::max(0, static_cast<int>(std::ceil(top - 0.5)));
    const int y1 = std::min(img.height - 1, static_cast<int>(std::floor(bottom - 0.5)));
    const int x0 = std::max(0, static_cast<int>(std::ceil(left - 0.5)));
    const int x1 = std::min(img.width - 1, static_cast<int>(std::floor(right - 0.5)));

    for (int py = y0; py <= y1; ++py) {
      const double yc = py + 0.5;
      for (int px = x0; px <= x1; ++px) {
        const double xc = px + 0.5;
        // Texture in vehicle-local coordinates: the pattern rides along with
        // the box, so a tracking-centered crop sees a nearly static patch.
        const double lx = xc - cx;
        const double ly = yc - (bottom - config_.vehicle_height * 0.5);
        double r, g, b;
        const double edge = std::min(std::min(xc - left, right - xc), std::min(yc - top, bottom - yc));
        if (edge < 1.5) {
          r = g = b = 0.08;
        } else if (yc > bottom - 7 && yc < bottom - 2 &&
                   std::abs(lx) > config_.vehicle_width * 0.5 - 9 &&
                   std::abs(lx) < config_.vehicle_width * 0.5 - 3) {
          r = 0.78;
          g = 0.14;
          b = 0.12;
        } else {
          const double tn = texture(s.texture_seed, lx, ly, 5.0) - 0.5;
          r = s.base_r + 0.36 * tn;
          g = s.base_g + 0.36 * tn;
          b = s.base_b + 0.36 * tn;
        }
        img.at(py, px, 0) = quantize(r);
        img.at(py, px, 1) = quantize(g);
        img.at(py, px, 2) = quantize(b);
      }
    }
  }

  SynthConfig config_;
  std::vector<synth_detail::Scenario> scenarios_;
  double scroll_speed_;
  uint64_t road_seed_;
};

namespace synth_detail {

inline std::vector<double> lane_keep_trajectory(const SynthConfig& c, Rng& rng, int lane) {
  const double amp = rng.uniform(c.nlc_amplitude_min, c.nlc_amplitude_max);
  const double period = rng.uniform(c.nlc_period_min, c.nlc_period_max);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  const double jitter = rng.uniform(-c.start_jitter, c.start_jitter);
  const double center = c.lane_center(lane) + jitter;
  std::vector<double> x(static_cast<size_t>(c.frame_count));
  for (int64_t t = 0; t < c.frame_count; ++t) {
    x[static_cast<size_t>(t)] = center + amp * std::sin(6.283185307179586 * t / period + phase);
  }
  return x;
}

// Trapezoidal lateral velocity: ramp up over R frames, cruise at v, ramp
// down over R frames, total travel = one lane width. The crossing happens
// mid-cruise, so consecutive-frame steps at the marking are at most v
// (< 1 px), which pins the labeled frame to within a pixel of the line.
struct LaneChangePlan {
  std::vector<double> x;
  double marking = 0.0;
  int64_t t0 = 0;
};

inline LaneChangePlan lane_change_trajectory(const SynthConfig& c, Rng& rng, int lane, int direction) {
  LaneChangePlan plan;
  const double v = rng.uniform(c.lc_speed_min, c.lc_speed_max);
  const double jitter = rng.uniform(-c.start_jitter, c.start_jitter);
  const double x0 = c.lane_center(lane) + jitter;
  const int R = c.lc_ramp_frames;
  const double travel = c.lane_width;
  const double ramp_dist = 0.5 * R * v;

  plan.marking = direction < 0 ? c.marking_x(lane) : c.marking_x(lane + 1);
  const double cross_dist = std::abs(x0 - plan.marking);
  if (!(cross_dist > ramp_dist + 1 && cross_dist < travel - ramp_dist - 1)) {
    config_error("lane geometry puts the marking crossing outside the cruise phase; "
                 "reduce start_jitter or lc_ramp_frames");
  }

  // Aim the crossing at a uniformly chosen frame inside the configured window.
  const int64_t target = rng.uniform_int(c.event_frame_min, c.event_frame_max);
  const double cross_offset = R + (cross_dist - ramp_dist) / v;
  const int64_t t0 = static_cast<int64_t>(std::llround(static_cast<double>(target) - cross_offset));
  const double cruise_dist = travel - 2.0 * ramp_dist;
  const int64_t total = 2 * R + static_cast<int64_t>(std::ceil(cruise_dist / v)) + 1;
  if (t0 < 2 || t0 + total > c.frame_count - 2) {
    config_error("frame_count " + std::to_string(c.frame_count) +
                 " too small for a lane change crossing near frame " + std::to_string(target));
  }

  plan.t0 = t0;
  plan.x.assign(static_cast<size_t>(c.frame_count), x0);
  double pos = 0.0;  // distance traveled along the maneuver
  for (int64_t t = t0; t + 1 < c.frame_count; ++t) {
    const int64_t u = t - t0;
    double speed;
    if (pos >= travel) {
      speed = 0.0;
    } else if (u < R) {
      speed = v * (static_cast<double>(u) + 0.5) / R;
    } else if (travel - pos <= ramp_dist) {
      // Symmetric ramp-down driven by remaining distance.
      speed = std::max(0.15 * v, v * (travel - pos) / ramp_dist);
    } else {
      speed = v;
    }
    pos = std::min(travel, pos + speed);
    plan.x[static_cast<size_t>(t + 1)] = x0 + direction * pos;
  }
  return plan;
}

inline int64_t scan_crossing(const std::vector<double>& x, double marking, int direction) {
  for (size_t t = 0; t < x.size(); ++t) {
    if (direction < 0 ? x[t] < marking : x[t] > marking) return static_cast<int64_t>(t);
  }
  return -1;
}

}  // namespace synth_detail

// Builds a complete synthetic recording. Identical (config, seed) pairs
// produce bit-identical frames, tracks and events.
inline Recording generate_synthetic(const SynthConfig& config, uint64_t seed) {
  using namespace synth_detail;
  config.validate();
  const Rng root(splitmix64(seed ^ 0x53594E5448ULL));

  const int total = config.nlc_count + config.llc_count + config.rlc_count;
  std::vector<ClassLabel> labels;
  labels.insert(labels.end(), static_cast<size_t>(config.nlc_count), ClassLabel::NLC);
  labels.insert(labels.end(), static_cast<size_t>(config.llc_count), ClassLabel::LLC);
  labels.insert(labels.end(), static_cast<size_t>(config.rlc_count), ClassLabel::RLC);

  // Shuffle band assignment so vertical position carries no class signal.
  std::vector<int> rows(static_cast<size_t>(total));
  for (int i = 0; i < total; ++i) rows[static_cast<size_t>(i)] = i;
  {
    Rng row_rng = root.substream(1);
    row_rng.shuffle(rows);
  }

  Rng misc = root.substream(2);
  const double scroll = misc.uniform(config.scroll_speed_min, config.scroll_speed_max);

  std::vector<Scenario> scenarios;
  scenarios.reserve(static_cast<size_t>(total));
  std::vector<ManeuverEvent> events;

  for (int i = 0; i < total; ++i) {
    Rng rng = root.substream(1000 + static_cast<uint64_t>(i));
    Scenario s;
    s.vehicle_id = i;
    s.label = labels[static_cast<size_t>(i)];
    s.row_y = config.row_y(rows[static_cast<size_t>(i)]);
    s.texture_seed = splitmix64(seed ^ (0xF00D + static_cast<uint64_t>(i) * 0x10001ULL));
    const double shade = rng.uniform(0.30, 0.68);
    s.base_r = shade + rng.uniform(-0.06, 0.06);
    s.base_g = shade + rng.uniform(-0.06, 0.06);
    s.base_b = shade + rng.uniform(-0.06, 0.06);

    if (s.label == ClassLabel::NLC) {
      const int lane = static_cast<int>(rng.uniform_int(0, config.num_lanes - 1));
      s.x = lane_keep_trajectory(config, rng, lane);
    } else {
      const int direction = s.label == ClassLabel::LLC ? -1 : +1;
      const int lane = direction < 0 ? static_cast<int>(rng.uniform_int(1, config.num_lanes - 1))
                                     : static_cast<int>(rng.uniform_int(0, config.num_lanes - 2));
      LaneChangePlan plan = lane_change_trajectory(config, rng, lane, direction);
      s.x = std::move(plan.x);
      s.marking_x = plan.marking;
      s.event_frame = scan_crossing(s.x, s.marking_x, direction);
      require(s.event_frame > 0, "lane change trajectory never crossed its marking");
      events.push_back({s.vehicle_id, s.label, s.event_frame});
    }
    scenarios.push_back(std::move(s));
  }

  Recording rec;
  rec.frame_rate = config.frame_rate;
  rec.events = std::move(events);

  const double half_w = config.vehicle_width * 0.5;
  for (const auto& s : scenarios) {
    TrackedVehicle track;
    track.vehicle_id = s.vehicle_id;
    track.observations.reserve(static_cast<size_t>(config.frame_count));
    for (int64_t t = 0; t < config.frame_count; ++t) {
      const double cx = s.x[static_cast<size_t>(t)];
      const double top = s.row_y - config.vehicle_height;
      ContourObservation obs;
      obs.frame_index = t;
      obs.contour = {{cx - half_w, top}, {cx + half_w, top}, {cx + half_w, s.row_y}, {cx - half_w, s.row_y}};
      track.observations.push_back(std::move(obs));
    }
    rec.tracks[s.vehicle_id] = std::move(track);
  }

  rec.frames = std::make_shared<SynthFrameSource>(config, seed, std::move(scenarios), scroll);
  rec.validate();
  return rec;
}

}  // namespace maneuver
