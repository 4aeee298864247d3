#pragma once

#include <cmath>
#include <opencv2/core.hpp>
#include <opencv2/video/tracking.hpp>
#include <vector>

#include "maneuver/core/error.hpp"
#include "maneuver/core/image.hpp"
#include "maneuver/core/tensor.hpp"

namespace maneuver {

// Farneback dense flow parameters. The defaults are the standard settings
// for small image patches; they are part of the config surface so runs can
// record them.
struct FlowParams {
  double pyr_scale = 0.5;
  int levels = 3;
  int winsize = 15;
  int iterations = 3;
  int poly_n = 5;
  double poly_sigma = 1.2;
};

// Per-pixel displacement field: next(x + dx, y + dy) ~ prev(x, y).
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> data;  // interleaved dx, dy

  FlowField() = default;
  FlowField(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 2, 0.f) {}

  float& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * 2 + c]; }
  float at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * 2 + c]; }
};

// Motion input for the networks: L consecutive flow fields stacked as 2L
// channels (dx1, dy1, dx2, dy2, ...), normalized to [-1, 1].
struct FlowStack {
  Tensor<float> data;  // [2L, H, W]
  int64_t pairs() const { return data.ndim() == 3 ? data.dim(0) / 2 : 0; }
};

// Luminance conversion used ahead of flow estimation.
inline ImageF to_grayscale(const ImageF& img) {
  if (img.channels == 1) return img;
  require(img.channels == 3, "to_grayscale: expected 1 or 3 channels");
  ImageF out(img.width, img.height, 1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      out.at(y, x, 0) = 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) + 0.114f * img.at(y, x, 2);
    }
  }
  return out;
}

namespace flow_detail {

inline cv::Mat to_mat8u(const ImageF& img) {
  cv::Mat m(img.height, img.width, CV_8UC1);
  for (int y = 0; y < img.height; ++y) {
    uint8_t* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      const float v = std::min(1.0f, std::max(0.0f, img.at(y, x, 0)));
      row[x] = static_cast<uint8_t>(std::lround(255.0f * v));
    }
  }
  return m;
}

}  // namespace flow_detail

/// Dense optical flow from `prev` to `next` (both single-channel, equal
/// size), Farneback's polynomial expansion method. Returns a field the same
/// size as the inputs.
inline FlowField dense_flow(const ImageF& prev, const ImageF& next, const FlowParams& params = {}) {
  if (prev.channels != 1 || next.channels != 1) {
    validation_error("dense_flow expects single-channel inputs; convert with to_grayscale first");
  }
  if (prev.width != next.width || prev.height != next.height) {
    validation_error("dense_flow: frame sizes differ");
  }
  if (prev.width < 8 || prev.height < 8) validation_error("dense_flow: frames too small");

  cv::Mat a = flow_detail::to_mat8u(prev);
  cv::Mat b = flow_detail::to_mat8u(next);
  cv::Mat flow;
  cv::calcOpticalFlowFarneback(a, b, flow, params.pyr_scale, params.levels, params.winsize,
                               params.iterations, params.poly_n, params.poly_sigma, 0);

  FlowField out(prev.width, prev.height);
  for (int y = 0; y < prev.height; ++y) {
    const cv::Vec2f* row = flow.ptr<cv::Vec2f>(y);
    for (int x = 0; x < prev.width; ++x) {
      const float dx = row[x][0];
      const float dy = row[x][1];
      if (!std::isfinite(dx) || !std::isfinite(dy)) {
        internal_error("flow estimator produced a non-finite vector");
      }
      out.at(y, x, 0) = dx;
      out.at(y, x, 1) = dy;
    }
  }
  return out;
}

/// Clips displacements to [-clip, clip] and rescales to [-1, 1], stacking L
/// fields into a 2L-channel tensor. The mapping is odd: negating a
/// displacement negates the normalized value exactly.
inline FlowStack flow_to_input(const std::vector<FlowField>& fields, float clip = 20.0f) {
  if (fields.empty()) validation_error("flow_to_input: no fields");
  if (!(clip > 0.0f)) validation_error("flow_to_input: clip must be positive");
  const int w = fields.front().width;
  const int h = fields.front().height;
  FlowStack stack;
  stack.data = Tensor<float>::zeros({static_cast<int64_t>(2 * fields.size()), h, w});
  for (size_t i = 0; i < fields.size(); ++i) {
    const FlowField& f = fields[i];
    if (f.width != w || f.height != h) validation_error("flow_to_input: field sizes differ");
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < 2; ++c) {
          const float v = std::min(clip, std::max(-clip, f.at(y, x, c)));
          stack.data[((static_cast<int64_t>(2 * i + c)) * h + y) * w + x] = v / clip;
        }
      }
    }
  }
  return stack;
}

}  // namespace maneuver
