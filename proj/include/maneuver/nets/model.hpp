#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "maneuver/ingest/types.hpp"
#include "maneuver/nets/layers.hpp"

namespace maneuver {

// Per-class result for one sample, class order NLC, LLC, RLC. For fused
// multi-stream models the probabilities are the primary quantity (mean of
// the stream softmaxes) and the logits are their logs, which keeps the
// softmax(logits) == probabilities identity intact.
struct ClassScores {
  std::array<double, kNumClasses> logits;
  std::array<double, kNumClasses> probabilities;

  int predicted_class() const {
    // Ties break toward the lower index, so NLC wins an exact tie.
    int best = 0;
    for (int i = 1; i < kNumClasses; ++i)
      if (probabilities[i] > probabilities[best]) best = i;
    return best;
  }
};

inline ClassScores scores_from_logits(const std::array<double, kNumClasses>& logits) {
  ClassScores s;
  s.logits = logits;
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0;
  for (int i = 0; i < kNumClasses; ++i) {
    s.probabilities[i] = std::exp(logits[i] - mx);
    sum += s.probabilities[i];
  }
  for (auto& p : s.probabilities) p /= sum;
  return s;
}

inline ClassScores scores_from_probabilities(const std::array<double, kNumClasses>& probs) {
  ClassScores s;
  s.probabilities = probs;
  for (int i = 0; i < kNumClasses; ++i) s.logits[i] = std::log(std::max(probs[i], 1e-30));
  return s;
}

// One sample's decoded window. Appearance frames are [T,3,H,W] in roughly
// [-0.5, 0.5] (patches are shifted by -0.5 so the input is centered); flow
// is [L,2,H,W] already scaled to [-1,1]. Models that skip a modality accept
// an empty tensor there.
template <typename T>
struct ClipSample {
  Tensor<T> appearance;
  Tensor<T> flow;
};

template <typename T>
class Model {
 public:
  virtual ~Model() = default;
  virtual std::string name() const = 0;
  virtual int stream_count() const = 0;
  virtual bool uses_flow() const = 0;
  // Returns one [B,3] logits tensor per stream. `training` switches batch
  // norm to batch statistics and updates its running buffers.
  virtual std::vector<Var<T>> forward(const std::vector<ClipSample<T>>& batch, bool training) = 0;

  // Clip lengths this model wants its samples resampled to before forward
  // (0 = take every frame/pair in the window). The data pipeline applies
  // these with the shared temporal resampling rule.
  virtual int appearance_frames_wanted() const { return 0; }
  virtual int flow_pairs_wanted() const { return 0; }

  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

 protected:
  ParamStore<T> store_;
};

// Late fusion: mean of the per-stream softmax distributions.
template <typename T>
Tensor<T> fuse_stream_probabilities(const std::vector<Tensor<T>>& stream_logits) {
  require(!stream_logits.empty(), "fusion needs at least one stream");
  const int64_t B = stream_logits[0].shape[0], K = stream_logits[0].shape[1];
  Tensor<T> fused = Tensor<T>::zeros({B, K});
  for (const auto& logits : stream_logits) {
    require(logits.shape == stream_logits[0].shape, "stream logit shapes differ");
    for (int64_t i = 0; i < B; ++i) {
      T mx = logits.at2(i, 0);
      for (int64_t j = 1; j < K; ++j) mx = std::max(mx, logits.at2(i, j));
      T sum = 0;
      std::vector<T> e(K);
      for (int64_t j = 0; j < K; ++j) {
        e[j] = std::exp(logits.at2(i, j) - mx);
        sum += e[j];
      }
      for (int64_t j = 0; j < K; ++j) fused.at2(i, j) += e[j] / sum;
    }
  }
  const T inv = T(1) / static_cast<T>(stream_logits.size());
  for (auto& v : fused.data) v *= inv;
  return fused;
}

// Training objective: mean over streams of the per-stream cross entropy, so
// each stream is pushed to classify on its own and the fused prediction
// inherits from both.
template <typename T>
Var<T> multi_stream_loss(const std::vector<Var<T>>& stream_logits, const std::vector<int>& labels,
                         const std::vector<T>& class_weights = {}) {
  require(!stream_logits.empty(), "loss needs at least one stream");
  Var<T> total = cross_entropy(stream_logits[0], labels, class_weights);
  for (size_t s = 1; s < stream_logits.size(); ++s)
    total = add(total, cross_entropy(stream_logits[s], labels, class_weights));
  return scale(total, T(1) / static_cast<T>(stream_logits.size()));
}

// Inference helper: forward without building a graph, fuse, wrap per-sample.
template <typename T>
std::vector<ClassScores> predict(Model<T>& model, const std::vector<ClipSample<T>>& batch) {
  NoGradGuard ng;
  auto streams = model.forward(batch, /*training=*/false);
  std::vector<Tensor<T>> values;
  values.reserve(streams.size());
  for (auto& s : streams) values.push_back(s.value());
  Tensor<T> fused = fuse_stream_probabilities(values);
  std::vector<ClassScores> out;
  out.reserve(static_cast<size_t>(fused.shape[0]));
  for (int64_t i = 0; i < fused.shape[0]; ++i) {
    std::array<double, kNumClasses> p;
    for (int j = 0; j < kNumClasses; ++j) p[j] = static_cast<double>(fused.at2(i, j));
    out.push_back(scores_from_probabilities(p));
  }
  return out;
}

namespace detail {

// Width helper: scales a base channel count by the width multiplier,
// clamping so tiny test configurations never hit zero channels.
inline int scaled_width(int base, double mult, int floor_width = 2) {
  int w = static_cast<int>(std::lround(base * mult));
  return std::max(w, floor_width);
}

// Stacks per-sample appearance clips [T,3,H,W] into [B,T,3,H,W], checking
// every sample agrees on shape.
template <typename T>
Tensor<T> stack_appearance(const std::vector<ClipSample<T>>& batch) {
  require(!batch.empty(), "empty batch");
  const auto& s0 = batch[0].appearance.shape;
  if (s0.size() != 4 || s0[1] != 3) validation_error("appearance clip must be [T,3,H,W]");
  std::vector<int64_t> shape = {static_cast<int64_t>(batch.size()), s0[0], s0[1], s0[2], s0[3]};
  Tensor<T> out(shape);
  const int64_t per = batch[0].appearance.numel();
  for (size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].appearance.shape != s0)
      validation_error("appearance clips in a batch must share one shape, got " + batch[i].appearance.shape_str() +
                       " vs " + batch[0].appearance.shape_str());
    std::copy(batch[i].appearance.data.begin(), batch[i].appearance.data.end(), out.data.begin() + i * per);
  }
  return out;
}

// Stacks per-sample flow [L,2,H,W] into [B,L,2,H,W].
template <typename T>
Tensor<T> stack_flow(const std::vector<ClipSample<T>>& batch) {
  require(!batch.empty(), "empty batch");
  const auto& s0 = batch[0].flow.shape;
  if (s0.size() != 4 || s0[1] != 2) validation_error("flow clip must be [L,2,H,W]");
  std::vector<int64_t> shape = {static_cast<int64_t>(batch.size()), s0[0], s0[1], s0[2], s0[3]};
  Tensor<T> out(shape);
  const int64_t per = batch[0].flow.numel();
  for (size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].flow.shape != s0)
      validation_error("flow clips in a batch must share one shape, got " + batch[i].flow.shape_str() + " vs " +
                       batch[0].flow.shape_str());
    std::copy(batch[i].flow.data.begin(), batch[i].flow.data.end(), out.data.begin() + i * per);
  }
  return out;
}

// [B,T,C,H,W] -> [B,C,T,H,W] for the 3-D convolution layout.
template <typename T>
Tensor<T> to_channel_time(const Tensor<T>& src) {
  require(src.shape.size() == 5, "to_channel_time expects rank 5");
  Tensor<T> out({src.shape[0], src.shape[2], src.shape[1], src.shape[3], src.shape[4]});
  permute_copy(src, out, {0, 2, 1, 3, 4});
  return out;
}

// Picks frames along the leading axis of a [T,...] tensor.
template <typename T>
Tensor<T> gather_leading(const Tensor<T>& src, const std::vector<int64_t>& indices) {
  require(!src.shape.empty(), "gather on a scalar");
  int64_t inner = 1;
  for (size_t i = 1; i < src.shape.size(); ++i) inner *= src.shape[i];
  std::vector<int64_t> shape = src.shape;
  shape[0] = static_cast<int64_t>(indices.size());
  Tensor<T> out(shape);
  for (size_t i = 0; i < indices.size(); ++i) {
    require(indices[i] >= 0 && indices[i] < src.shape[0], "gather index out of range");
    std::copy_n(src.data.begin() + indices[i] * inner, inner, out.data.begin() + static_cast<int64_t>(i) * inner);
  }
  return out;
}

}  // namespace detail

}  // namespace maneuver
