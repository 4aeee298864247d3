#pragma once

#include <cstdint>
#include <vector>

#include "maneuver/core/error.hpp"

namespace maneuver {

// Interleaved row-major image, 8-bit per channel (RGB order for 3-channel).
struct ImageU8 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<uint8_t> data;

  ImageU8() = default;
  ImageU8(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, 0) {
    require(w >= 0 && h >= 0 && c > 0, "ImageU8: bad dimensions");
  }

  uint8_t& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  uint8_t at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

inline bool operator==(const ImageU8& a, const ImageU8& b) {
  return a.width == b.width && a.height == b.height && a.channels == b.channels && a.data == b.data;
}

// Float image, same layout, values nominally in [0, 1] after decode.
struct ImageF {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  ImageF() = default;
  ImageF(int w, int h, int c) : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, 0.f) {
    require(w >= 0 && h >= 0 && c > 0, "ImageF: bad dimensions");
  }

  float& at(int y, int x, int c) {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return data[(static_cast<size_t>(y) * width + x) * channels + c];
  }
};

inline ImageF to_float(const ImageU8& img) {
  ImageF out(img.width, img.height, img.channels);
  for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = img.data[i] / 255.0f;
  return out;
}

}  // namespace maneuver
