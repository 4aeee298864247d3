#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "maneuver/core/error.hpp"
#include "maneuver/core/geometry.hpp"
#include "maneuver/core/image.hpp"
#include "maneuver/ingest/types.hpp"

namespace maneuver {

/// Square region of interest in image coordinates. `center` is sub-pixel;
/// `side` is the box edge length in pixels.
struct SquareBox {
  Point2d center;
  double side = 0.0;
};

/// Context multiplier applied to the tight vehicle box. x1 is the vehicle
/// itself; larger scales trade vehicle resolution for surrounding road.
enum class RoiScale : int { x1 = 1, x2 = 2, x3 = 3, x4 = 4 };

inline RoiScale roi_scale_from_int(int k) {
  if (k < 1 || k > 4) validation_error("roi scale must be 1..4, got " + std::to_string(k));
  return static_cast<RoiScale>(k);
}

inline int to_int(RoiScale s) { return static_cast<int>(s); }

/// Cropped (optionally padded) image region plus where it came from.
struct Patch {
  ImageF image;
  SquareBox box;  // the box that produced this patch, after scaling
  // Provenance for cache keys and error messages.
  std::string recording_id;
  int64_t vehicle_id = -1;
  int64_t frame_index = -1;
  int scale = 1;
};

/// Tight square around a contour: axis-aligned bounding box, then the longer
/// edge is used for both sides so aspect ratio never distorts the crop.
inline SquareBox square_bbox(const std::vector<Point2d>& contour) {
  if (contour.size() < 3) validation_error("contour needs at least 3 points");
  double min_x = contour[0].x, max_x = contour[0].x;
  double min_y = contour[0].y, max_y = contour[0].y;
  for (const auto& p : contour) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double w = max_x - min_x;
  const double h = max_y - min_y;
  if (w <= 0.0 && h <= 0.0) validation_error("degenerate contour: all points identical");
  SquareBox box;
  box.center = {(min_x + max_x) * 0.5, (min_y + max_y) * 0.5};
  box.side = std::max(w, h);
  return box;
}

inline SquareBox scale_box(const SquareBox& box, RoiScale scale) {
  return {box.center, box.side * to_int(scale)};
}

/// Integer pixel rectangle covered by a box. Sub-pixel edges are resolved by
/// rounding the top-left sample position half away from zero; the patch side
/// is the rounded box side. This is the single place that decides which
/// pixels a box covers, so every downstream geometric property (centering,
/// padding masks, scale ratios) inherits one convention.
inline PixelRect box_pixel_rect(const SquareBox& box) {
  const int64_t side = round_half_away(box.side);
  PixelRect r;
  r.w = side;
  r.h = side;
  r.x0 = round_half_away(box.center.x - (static_cast<double>(side) - 1.0) / 2.0);
  r.y0 = round_half_away(box.center.y - (static_cast<double>(side) - 1.0) / 2.0);
  return r;
}

/// Crops `box` out of `frame`. Pixels outside the image are zero-padded, so
/// a box hanging off the edge (or entirely outside) is valid input. Output
/// values are in [0, 1].
inline Patch crop_pad(const ImageU8& frame, const SquareBox& box) {
  if (!(box.side > 0.0) || !std::isfinite(box.side)) {
    validation_error("crop box side must be positive and finite");
  }
  const PixelRect r = box_pixel_rect(box);
  if (r.w < 1) validation_error("crop box rounds to an empty pixel rect");
  Patch patch;
  patch.box = box;
  patch.image = ImageF(static_cast<int>(r.w), static_cast<int>(r.h), frame.channels);
  for (int64_t i = 0; i < r.h; ++i) {
    const int64_t sy = r.y0 + i;
    if (sy < 0 || sy >= frame.height) continue;  // stays zero
    for (int64_t j = 0; j < r.w; ++j) {
      const int64_t sx = r.x0 + j;
      if (sx < 0 || sx >= frame.width) continue;
      for (int c = 0; c < frame.channels; ++c) {
        patch.image.at(static_cast<int>(i), static_cast<int>(j), c) =
            frame.at(static_cast<int>(sy), static_cast<int>(sx), c) / 255.0f;
      }
    }
  }
  return patch;
}

/// Bilinear resize to target x target. Identity when sizes already match
/// (the interpolation weights collapse to exact copies). Output values are
/// convex combinations of inputs, so min/max never exceed the source range.
inline ImageF resize_bilinear(const ImageF& src, int target) {
  if (target < 8) validation_error("resize target below 8 px");
  if (src.width <= 0 || src.height <= 0) validation_error("resize of empty image");
  ImageF dst(target, target, src.channels);
  const double sx = static_cast<double>(src.width) / target;
  const double sy = static_cast<double>(src.height) / target;
  for (int y = 0; y < target; ++y) {
    double fy = (y + 0.5) * sy - 0.5;
    fy = std::min(std::max(fy, 0.0), static_cast<double>(src.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      fx = std::min(std::max(fx, 0.0), static_cast<double>(src.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < src.channels; ++c) {
        const double top = src.at(y0, x0, c) + (src.at(y0, x1, c) - src.at(y0, x0, c)) * wx;
        const double bot = src.at(y1, x0, c) + (src.at(y1, x1, c) - src.at(y1, x0, c)) * wx;
        dst.at(y, x, c) = static_cast<float>(top + (bot - top) * wy);
      }
    }
  }
  return dst;
}

inline Patch resize_patch(const Patch& patch, int target) {
  Patch out = patch;
  out.image = resize_bilinear(patch.image, target);
  return out;
}

/// Extracts the scaled ROI around one vehicle for each requested frame. The
/// box is recomputed per frame from that frame's contour, so the crop tracks
/// the vehicle. A frame without an observation is a hard error: windows are
/// only enumerated over gap-free spans, so hitting one here means the caller
/// skipped that check.
inline std::vector<Patch> extract_roi_sequence(const Recording& rec, int64_t vehicle_id,
                                               const std::vector<int64_t>& frame_indices,
                                               RoiScale scale,
                                               const std::string& recording_id = "") {
  const TrackedVehicle& track = rec.track(vehicle_id);
  std::vector<Patch> out;
  out.reserve(frame_indices.size());
  for (int64_t f : frame_indices) {
    if (f < 0 || f >= rec.frame_count()) {
      validation_error("frame " + std::to_string(f) + " outside recording");
    }
    const ContourObservation* obs = track.find(f);
    if (!obs) {
      validation_error("track gap: vehicle " + std::to_string(vehicle_id) +
                       " has no observation at frame " + std::to_string(f));
    }
    const SquareBox box = scale_box(square_bbox(obs->contour), scale);
    Patch p = crop_pad(rec.frames->frame(f), box);
    p.recording_id = recording_id;
    p.vehicle_id = vehicle_id;
    p.frame_index = f;
    p.scale = to_int(scale);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace maneuver
