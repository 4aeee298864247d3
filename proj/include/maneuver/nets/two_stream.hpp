#pragma once

#include "maneuver/nets/model.hpp"

namespace maneuver {

// Shared per-stream 2-D ConvNet: 5 convolutions, 3 fully connected layers,
// max-pooling over 3x3 windows with stride 2 after the first, second, and
// fifth convolutions. The appearance stream feeds it single frames (time
// folded into the batch); the motion stream feeds it the whole stacked flow
// volume in one pass.
template <typename T>
struct StreamConvNet {
  Conv2dLayer<T> conv1, conv2, conv3, conv4, conv5;
  LinearLayer<T> fc1, fc2, fc3;
  int input_size = 0;
  int flat_features = 0;

  StreamConvNet() = default;

  StreamConvNet(ParamStore<T>& ps, Rng& rng, const std::string& prefix, int in_ch, double width_mult,
                int input_size_)
      : input_size(input_size_) {
    using detail::scaled_width;
    const int w1 = scaled_width(64, width_mult);
    const int w2 = scaled_width(128, width_mult);
    const int w3 = scaled_width(256, width_mult);
    const int w4 = scaled_width(512, width_mult);
    const int w5 = scaled_width(512, width_mult);
    const int wf = scaled_width(512, width_mult);
    conv1 = Conv2dLayer<T>(ps, rng, prefix + ".conv1", in_ch, w1, 7, 2, 3);
    conv2 = Conv2dLayer<T>(ps, rng, prefix + ".conv2", w1, w2, 5, 2, 2);
    conv3 = Conv2dLayer<T>(ps, rng, prefix + ".conv3", w2, w3, 3, 1, 1);
    conv4 = Conv2dLayer<T>(ps, rng, prefix + ".conv4", w3, w4, 3, 1, 1);
    conv5 = Conv2dLayer<T>(ps, rng, prefix + ".conv5", w4, w5, 3, 1, 1);
    const int side = final_spatial(input_size);
    flat_features = w5 * side * side;
    fc1 = LinearLayer<T>(ps, rng, prefix + ".fc1", flat_features, wf);
    fc2 = LinearLayer<T>(ps, rng, prefix + ".fc2", wf, wf);
    fc3 = LinearLayer<T>(ps, rng, prefix + ".fc3", wf, kNumClasses);
  }

  static int final_spatial(int in) {
    auto conv = [](int v, int k, int s, int p) { return static_cast<int>(detail::conv_out_dim(v, k, s, p)); };
    int v = conv(in, 7, 2, 3);
    v = conv(v, 3, 2, 1);  // pool
    v = conv(v, 5, 2, 2);
    v = conv(v, 3, 2, 1);  // pool
    // conv3..conv5 keep the size
    v = conv(v, 3, 2, 1);  // pool
    return v;
  }

  // x: [B, in_ch, S, S] -> logits [B, 3]
  Var<T> operator()(const Var<T>& x) const {
    const auto& s = x.value().shape;
    if (s.size() != 4 || s[2] != input_size || s[3] != input_size)
      validation_error("stream expects [B,C," + std::to_string(input_size) + "," + std::to_string(input_size) +
                       "], got " + x.value().shape_str());
    Var<T> h = maxpool2d(relu(conv1(x)), 3, 2, 1);
    h = maxpool2d(relu(conv2(h)), 3, 2, 1);
    h = relu(conv3(h));
    h = relu(conv4(h));
    h = maxpool2d(relu(conv5(h)), 3, 2, 1);
    h = reshape(h, {s[0], flat_features});
    h = relu(fc1(h));
    h = relu(fc2(h));
    return fc3(h);
  }
};

struct TwoStreamConfig {
  double width_multiplier = 1.0;
  int input_size = 112;
  // Depth of the stacked-flow input to the motion stream (channel count is
  // twice this). Fixed at construction because it sets conv1's fan-in.
  int flow_pairs = 19;
  // Frames the appearance stream consumes per window (0 = every frame).
  // Desk-scale presets use a handful; the per-frame logits are averaged
  // either way.
  int clip_frames = 0;
};

namespace detail {

// Folds time into the batch, runs the per-frame stream, and averages the
// per-frame logits back into one [B,3] row per clip.
template <typename T>
Var<T> per_frame_logits(const StreamConvNet<T>& stream, const Tensor<T>& clips) {
  const int64_t B = clips.shape[0], Tn = clips.shape[1], C = clips.shape[2], H = clips.shape[3], W = clips.shape[4];
  Tensor<T> folded = clips;
  folded.shape = {B * Tn, C, H, W};
  Var<T> x = Var<T>::leaf(std::move(folded), false);
  Var<T> logits = stream(x);  // [B*T, 3]
  logits = reshape(logits, {B, Tn, static_cast<int64_t>(kNumClasses)});
  return mean_frames(logits);
}

// [B,L,2,H,W] sample-major flow becomes a [B,2L,H,W] channel stack; the
// memory layout already interleaves (dx,dy) per pair, so this is a
// relabeling, not a copy.
template <typename T>
Tensor<T> fold_flow_stack(Tensor<T> flow) {
  flow.shape = {flow.shape[0], flow.shape[1] * flow.shape[2], flow.shape[3], flow.shape[4]};
  return flow;
}

}  // namespace detail

// Appearance-only baseline: the upper pathway of the disjoint architecture
// on its own. Each frame is classified independently and the logits are
// averaged over the clip.
template <typename T>
class BaselineModel : public Model<T> {
 public:
  BaselineModel(const TwoStreamConfig& cfg, Rng& rng) : cfg_(cfg) {
    stream_ = StreamConvNet<T>(this->store_, rng, "appearance", 3, cfg.width_multiplier, cfg.input_size);
  }

  std::string name() const override { return "baseline"; }
  int stream_count() const override { return 1; }
  bool uses_flow() const override { return false; }
  int appearance_frames_wanted() const override { return cfg_.clip_frames; }

  std::vector<Var<T>> forward(const std::vector<ClipSample<T>>& batch, bool) override {
    Tensor<T> clips = detail::stack_appearance(batch);
    return {detail::per_frame_logits(stream_, clips)};
  }

 private:
  TwoStreamConfig cfg_;
  StreamConvNet<T> stream_;
};

// Disjoint two-stream model: independent appearance and motion ConvNets
// whose softmax outputs are averaged at the very end (late fusion). The
// motion stream sees the full stacked-flow volume in a single pass.
template <typename T>
class DisjointModel : public Model<T> {
 public:
  DisjointModel(const TwoStreamConfig& cfg, Rng& rng) : cfg_(cfg) {
    require(cfg.flow_pairs >= 1, "disjoint model needs at least one flow pair");
    appearance_ = StreamConvNet<T>(this->store_, rng, "appearance", 3, cfg.width_multiplier, cfg.input_size);
    motion_ = StreamConvNet<T>(this->store_, rng, "motion", 2 * cfg.flow_pairs, cfg.width_multiplier, cfg.input_size);
  }

  std::string name() const override { return "disjoint"; }
  int stream_count() const override { return 2; }
  bool uses_flow() const override { return true; }
  int appearance_frames_wanted() const override { return cfg_.clip_frames; }
  int flow_pairs_wanted() const override { return cfg_.flow_pairs; }

  std::vector<Var<T>> forward(const std::vector<ClipSample<T>>& batch, bool) override {
    Tensor<T> clips = detail::stack_appearance(batch);
    Tensor<T> flow = detail::stack_flow(batch);
    if (flow.shape[1] != cfg_.flow_pairs)
      validation_error("motion stream was built for " + std::to_string(cfg_.flow_pairs) + " flow pairs, got " +
                       std::to_string(flow.shape[1]));
    Var<T> appearance_logits = detail::per_frame_logits(appearance_, clips);
    Var<T> motion_logits = motion_(Var<T>::leaf(detail::fold_flow_stack(std::move(flow)), false));
    return {appearance_logits, motion_logits};
  }

 private:
  TwoStreamConfig cfg_;
  StreamConvNet<T> appearance_, motion_;
};

}  // namespace maneuver
