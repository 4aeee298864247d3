#pragma once

#include "maneuver/nets/inflate.hpp"
#include "maneuver/nets/model.hpp"

namespace maneuver {

struct I3dConfig {
  double width_multiplier = 1.0;
  int input_size = 112;
  static constexpr int clip_len = 16;
};

// One inflated-3D pathway: 8 convolutions, 5 pooling layers (the last is a
// global average pool), 2 fully connected layers, batch norm after every
// convolution and after the hidden fc. Convolution weights start as
// inflated 2-D kernels: a He-initialized 2-D filter replicated over the
// temporal taps and divided by their count, so a frozen-in-time clip
// initially responds exactly like a single frame through the 2-D filter.
template <typename T>
struct I3dStream {
  Conv3dLayer<T> conv1, conv2, conv3a, conv3b, conv4a, conv4b, conv5a, conv5b;
  BatchNormLayer<T> bn1, bn2, bn3a, bn3b, bn4a, bn4b, bn5a, bn5b, bn_fc;
  LinearLayer<T> fc1, fc2;
  int input_size = 0;

  I3dStream() = default;

  I3dStream(ParamStore<T>& ps, Rng& rng, const std::string& prefix, int in_ch, double width_mult, int input_size_)
      : input_size(input_size_) {
    using detail::scaled_width;
    const int w1 = scaled_width(64, width_mult);
    const int w2 = scaled_width(128, width_mult);
    const int w3 = scaled_width(256, width_mult);
    const int w4 = scaled_width(512, width_mult);
    const int w5 = scaled_width(512, width_mult);
    const int wf = scaled_width(512, width_mult);

    auto inflated_conv = [&](const std::string& name, int ci, int co, std::array<int, 3> k, std::array<int, 3> s,
                             std::array<int, 3> p) {
      Conv3dLayer<T> layer(ps, rng, name, ci, co, k, s, p);
      Tensor<T> k2 = init::he_normal<T>({co, ci, k[1], k[2]}, static_cast<int64_t>(ci) * k[1] * k[2], rng);
      layer.w.node()->value = inflate_2d_weights(k2, k[0]);
      return layer;
    };

    conv1 = inflated_conv(prefix + ".conv1", in_ch, w1, {3, 5, 5}, {1, 4, 4}, {1, 2, 2});
    bn1 = BatchNormLayer<T>(ps, prefix + ".bn1", w1);
    conv2 = inflated_conv(prefix + ".conv2", w1, w2, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    bn2 = BatchNormLayer<T>(ps, prefix + ".bn2", w2);
    conv3a = inflated_conv(prefix + ".conv3a", w2, w3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    bn3a = BatchNormLayer<T>(ps, prefix + ".bn3a", w3);
    conv3b = inflated_conv(prefix + ".conv3b", w3, w3, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    bn3b = BatchNormLayer<T>(ps, prefix + ".bn3b", w3);
    conv4a = inflated_conv(prefix + ".conv4a", w3, w4, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    bn4a = BatchNormLayer<T>(ps, prefix + ".bn4a", w4);
    conv4b = inflated_conv(prefix + ".conv4b", w4, w4, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    bn4b = BatchNormLayer<T>(ps, prefix + ".bn4b", w4);
    conv5a = inflated_conv(prefix + ".conv5a", w4, w5, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    bn5a = BatchNormLayer<T>(ps, prefix + ".bn5a", w5);
    conv5b = inflated_conv(prefix + ".conv5b", w5, w5, {3, 3, 3}, {1, 1, 1}, {1, 1, 1});
    bn5b = BatchNormLayer<T>(ps, prefix + ".bn5b", w5);

    fc1 = LinearLayer<T>(ps, rng, prefix + ".fc1", w5, wf);
    bn_fc = BatchNormLayer<T>(ps, prefix + ".bn_fc", wf);
    fc2 = LinearLayer<T>(ps, rng, prefix + ".fc2", wf, kNumClasses);
  }

  // x: [B, C, 16, S, S] -> logits [B, 3]
  Var<T> operator()(const Var<T>& x, bool training) const {
    const auto& s = x.value().shape;
    if (s.size() != 5 || s[2] != I3dConfig::clip_len)
      validation_error("clip length must be " + std::to_string(I3dConfig::clip_len) + " frames, got " +
                       x.value().shape_str());
    if (s[3] != input_size || s[4] != input_size)
      validation_error("stream expects " + std::to_string(input_size) + "x" + std::to_string(input_size) +
                       " inputs, got " + x.value().shape_str());
    Var<T> h = relu(bn1(conv1(x), training));
    h = maxpool3d(h, {1, 3, 3}, {1, 2, 2}, {0, 1, 1});  // pool1
    h = relu(bn2(conv2(h), training));
    h = maxpool3d(h, {2, 2, 2}, {2, 2, 2}, {0, 0, 0});  // pool2
    h = relu(bn3a(conv3a(h), training));
    h = relu(bn3b(conv3b(h), training));
    h = maxpool3d(h, {2, 2, 2}, {2, 2, 2}, {0, 1, 1});  // pool3
    h = relu(bn4a(conv4a(h), training));
    h = relu(bn4b(conv4b(h), training));
    h = maxpool3d(h, {2, 2, 2}, {2, 2, 2}, {0, 0, 0});  // pool4
    h = relu(bn5a(conv5a(h), training));
    h = relu(bn5b(conv5b(h), training));
    h = global_avg_pool(h);  // pool5
    h = relu(bn_fc(fc1(h), training));
    return fc2(h);
  }
};

// Two-stream inflated-3D model over 16-frame clips: an appearance pathway
// on RGB frames and a motion pathway on per-frame flow pairs, fused late
// like the disjoint model.
template <typename T>
class I3dModel : public Model<T> {
 public:
  I3dModel(const I3dConfig& cfg, Rng& rng) : cfg_(cfg) {
    appearance_ = I3dStream<T>(this->store_, rng, "appearance", 3, cfg.width_multiplier, cfg.input_size);
    motion_ = I3dStream<T>(this->store_, rng, "motion", 2, cfg.width_multiplier, cfg.input_size);
  }

  std::string name() const override { return "i3d"; }
  int stream_count() const override { return 2; }
  bool uses_flow() const override { return true; }
  int appearance_frames_wanted() const override { return I3dConfig::clip_len; }
  int flow_pairs_wanted() const override { return I3dConfig::clip_len; }

  std::vector<Var<T>> forward(const std::vector<ClipSample<T>>& batch, bool training) override {
    Tensor<T> clips = detail::to_channel_time(detail::stack_appearance(batch));  // [B,3,T,H,W]
    Tensor<T> flow = detail::to_channel_time(detail::stack_flow(batch));         // [B,2,T,H,W]
    Var<T> a = appearance_(Var<T>::leaf(std::move(clips), false), training);
    Var<T> m = motion_(Var<T>::leaf(std::move(flow), false), training);
    return {a, m};
  }

 private:
  I3dConfig cfg_;
  I3dStream<T> appearance_, motion_;
};

}  // namespace maneuver
