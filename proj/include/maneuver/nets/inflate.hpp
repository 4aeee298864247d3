#pragma once

#include "maneuver/core/tensor.hpp"

namespace maneuver {

// Turns a 2-D convolution kernel [F,C,kh,kw] into a 3-D kernel
// [F,C,T,kh,kw] by replicating it T times along the new temporal axis and
// dividing by T. A temporally constant input then produces, at every output
// frame, exactly the response the 2-D layer would have produced on a single
// frame, and the kernel summed over time recovers the 2-D kernel.
template <typename T>
Tensor<T> inflate_2d_weights(const Tensor<T>& kernel2d, int64_t time_taps) {
  require(kernel2d.shape.size() == 4, "inflate_2d_weights expects [F,C,kh,kw]");
  require(time_taps >= 1, "inflate_2d_weights needs time_taps >= 1");
  const int64_t F = kernel2d.shape[0], C = kernel2d.shape[1], kh = kernel2d.shape[2], kw = kernel2d.shape[3];
  Tensor<T> out({F, C, time_taps, kh, kw});
  const int64_t plane = kh * kw;
  const T inv = T(1) / static_cast<T>(time_taps);
  for (int64_t fc = 0; fc < F * C; ++fc) {
    const T* src = kernel2d.data.data() + fc * plane;
    for (int64_t t = 0; t < time_taps; ++t) {
      T* dst = out.data.data() + (fc * time_taps + t) * plane;
      for (int64_t i = 0; i < plane; ++i) dst[i] = src[i] * inv;
    }
  }
  return out;
}

}  // namespace maneuver
