#pragma once

#include <cmath>
#include <cstdint>

namespace maneuver {

struct Point2d {
  double x = 0.0;
  double y = 0.0;
};

inline bool operator==(const Point2d& a, const Point2d& b) {
  return a.x == b.x && a.y == b.y;
}

// Half-away-from-zero rounding to integer. Used for all sub-pixel to pixel
// decisions so the convention is the same everywhere.
inline int64_t round_half_away(double v) { return std::llround(v); }

// Axis-aligned integer pixel rectangle [x0, x0+w) x [y0, y0+h).
struct PixelRect {
  int64_t x0 = 0;
  int64_t y0 = 0;
  int64_t w = 0;
  int64_t h = 0;

  bool contains(int64_t x, int64_t y) const {
    return x >= x0 && x < x0 + w && y >= y0 && y < y0 + h;
  }
};

}  // namespace maneuver
