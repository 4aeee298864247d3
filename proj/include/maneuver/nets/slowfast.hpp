#pragma once

#include "maneuver/nets/model.hpp"

namespace maneuver {

struct SlowFastConfig {
  double width_multiplier = 1.0;
  int input_size = 112;
  int tau = 16;        // slow pathway temporal stride
  int alpha = 8;       // fast/slow frame-rate ratio
  double beta = 0.125;  // fast/slow channel ratio
  // Windows are temporally resampled to this length before sampling, so a
  // 20-frame window still yields clip_len/tau slow frames.
  int clip_len = 64;

  void validate() const {
    if (tau < 1 || alpha < 1) config_error("tau and alpha must be positive");
    if (tau % alpha != 0) config_error("alpha must divide tau so the fast stride tau/alpha is integral");
    if (beta <= 0 || beta > 1) config_error("beta must be in (0, 1]");
    if (clip_len < tau) config_error("clip_len must be at least tau");
  }
};

struct SlowFastIndices {
  std::vector<int64_t> slow, fast;
};

// Frame picks for the two pathways: the slow pathway reads every tau-th
// frame, the fast pathway every (tau/alpha)-th, and the fast count is
// exactly alpha times the slow count.
inline SlowFastIndices slowfast_sample(int64_t clip_len, const SlowFastConfig& cfg) {
  cfg.validate();
  if (clip_len < cfg.tau)
    validation_error("clip of " + std::to_string(clip_len) + " frames is shorter than tau=" + std::to_string(cfg.tau) +
                     "; resample the window first");
  SlowFastIndices out;
  const int64_t n_slow = clip_len / cfg.tau;
  const int64_t fast_stride = cfg.tau / cfg.alpha;
  for (int64_t i = 0; i < n_slow; ++i) out.slow.push_back(i * cfg.tau);
  for (int64_t i = 0; i < n_slow * cfg.alpha; ++i) out.fast.push_back(i * fast_stride);
  return out;
}

// Tensor-level convenience: splits a [T,C,H,W] clip into the two pathway
// clips.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> slowfast_sample_clip(const Tensor<T>& clip, const SlowFastConfig& cfg) {
  require(clip.shape.size() == 4, "slowfast_sample_clip expects [T,C,H,W]");
  SlowFastIndices idx = slowfast_sample(clip.shape[0], cfg);
  return {detail::gather_leading(clip, idx.slow), detail::gather_leading(clip, idx.fast)};
}

namespace slowfast_detail {

// Basic 3-D residual block: two convolutions with batch norm, identity or
// projected shortcut. Temporal kernel size of the first convolution is per
// pathway/stage; spatial kernels are 3x3.
template <typename T>
struct ResBlock3d {
  Conv3dLayer<T> conv1, conv2;
  BatchNormLayer<T> bn1, bn2;
  bool has_projection = false;
  Conv3dLayer<T> proj_conv;
  BatchNormLayer<T> proj_bn;

  ResBlock3d() = default;

  ResBlock3d(ParamStore<T>& ps, Rng& rng, const std::string& name, int in_ch, int out_ch, int kt, int spatial_stride) {
    const int pt = kt / 2;
    conv1 = Conv3dLayer<T>(ps, rng, name + ".conv1", in_ch, out_ch, {kt, 3, 3}, {1, spatial_stride, spatial_stride},
                           {pt, 1, 1});
    bn1 = BatchNormLayer<T>(ps, name + ".bn1", out_ch);
    conv2 = Conv3dLayer<T>(ps, rng, name + ".conv2", out_ch, out_ch, {1, 3, 3}, {1, 1, 1}, {0, 1, 1});
    bn2 = BatchNormLayer<T>(ps, name + ".bn2", out_ch);
    has_projection = (in_ch != out_ch) || (spatial_stride != 1);
    if (has_projection) {
      proj_conv = Conv3dLayer<T>(ps, rng, name + ".proj", in_ch, out_ch, {1, 1, 1},
                                 {1, spatial_stride, spatial_stride}, {0, 0, 0});
      proj_bn = BatchNormLayer<T>(ps, name + ".proj_bn", out_ch);
    }
  }

  Var<T> operator()(const Var<T>& x, bool training) const {
    Var<T> h = relu(bn1(conv1(x), training));
    h = bn2(conv2(h), training);
    Var<T> sc = has_projection ? proj_bn(proj_conv(x), training) : x;
    return relu(add(sc, h));
  }
};

}  // namespace slowfast_detail

// Appearance-only two-pathway model: a slow pathway over sparsely sampled
// frames carrying most channels, and a fast pathway over densely sampled
// frames at a beta fraction of the channels. After the stem and after each
// of the first four residual blocks, a strided temporal convolution over
// the fast features is concatenated into the slow pathway (the lateral
// connection). Both pathways are globally pooled and classified by one
// fully connected layer. Optical flow is not used.
template <typename T>
class SlowFastModel : public Model<T> {
 public:
  explicit SlowFastModel(const SlowFastConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    using detail::scaled_width;
    // Slow-pathway widths for the stem and the five residual blocks. The
    // floor of 8 keeps round(beta * width) >= 1 at desk scale.
    const std::array<int, 6> base = {64, 64, 128, 128, 256, 256};
    for (int i = 0; i < 6; ++i) {
      slow_ch_[i] = scaled_width(base[i], cfg.width_multiplier, 8);
      fast_ch_[i] = static_cast<int>(std::lround(cfg.beta * slow_ch_[i]));
      require(fast_ch_[i] >= 1, "beta * slow width rounds to zero; widen the model");
    }

    slow_stem_ = Conv3dLayer<T>(this->store_, rng, "slow.stem", 3, slow_ch_[0], {1, 7, 7}, {1, 4, 4}, {0, 3, 3});
    slow_stem_bn_ = BatchNormLayer<T>(this->store_, "slow.stem_bn", slow_ch_[0]);
    fast_stem_ = Conv3dLayer<T>(this->store_, rng, "fast.stem", 3, fast_ch_[0], {5, 7, 7}, {1, 4, 4}, {2, 3, 3});
    fast_stem_bn_ = BatchNormLayer<T>(this->store_, "fast.stem_bn", fast_ch_[0]);

    // Spatial strides and slow-pathway temporal kernels per block. The slow
    // pathway goes temporal only in the last two blocks; the fast pathway
    // has temporal kernels throughout.
    const std::array<int, 5> stride = {1, 2, 1, 2, 1};
    const std::array<int, 5> slow_kt = {1, 1, 1, 3, 3};
    int slow_in = fused_channels(0), fast_in = fast_ch_[0];
    for (int i = 0; i < 5; ++i) {
      const std::string tag = "b" + std::to_string(i + 1);
      slow_blocks_[i] = slowfast_detail::ResBlock3d<T>(this->store_, rng, "slow." + tag, slow_in, slow_ch_[i + 1],
                                                       slow_kt[i], stride[i]);
      fast_blocks_[i] = slowfast_detail::ResBlock3d<T>(this->store_, rng, "fast." + tag, fast_in, fast_ch_[i + 1], 3,
                                                       stride[i]);
      fast_in = fast_ch_[i + 1];
      slow_in = i < 4 ? fused_channels(i + 1) : slow_ch_[i + 1];
    }

    // Lateral connections: one after the stem and one after each of blocks
    // 1..4, mapping fast features to 2*fast channels and aligning the
    // temporal length to the slow pathway's.
    for (int i = 0; i < 5; ++i) {
      laterals_[i] = Conv3dLayer<T>(this->store_, rng, "lateral" + std::to_string(i), fast_ch_[i], 2 * fast_ch_[i],
                                    {7, 1, 1}, {cfg.alpha, 1, 1}, {3, 0, 0});
    }

    fc_ = LinearLayer<T>(this->store_, rng, "fc", slow_ch_[5] + fast_ch_[5], kNumClasses);
  }

  std::string name() const override { return "slowfast"; }
  int stream_count() const override { return 1; }
  bool uses_flow() const override { return false; }
  int appearance_frames_wanted() const override { return cfg_.clip_len; }

  // Channel pairs (slow, fast) for the stem and each block, for auditing
  // the beta ratio.
  std::vector<std::pair<int, int>> stage_channels() const {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < 6; ++i) out.push_back({slow_ch_[i], fast_ch_[i]});
    return out;
  }

  // Test hook: when false, lateral outputs are replaced by zeros of the
  // same shape, so the pathways stop exchanging information but every
  // downstream shape is preserved.
  bool laterals_enabled = true;

  std::vector<Var<T>> forward(const std::vector<ClipSample<T>>& batch, bool training) override {
    require(!batch.empty(), "empty batch");
    // Per-sample pathway sampling, then stacking.
    std::vector<ClipSample<T>> slow_samples(batch.size()), fast_samples(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
      auto [s, f] = slowfast_sample_clip(batch[i].appearance, cfg_);
      slow_samples[i].appearance = std::move(s);
      fast_samples[i].appearance = std::move(f);
    }
    Tensor<T> slow_in = detail::to_channel_time(detail::stack_appearance(slow_samples));
    Tensor<T> fast_in = detail::to_channel_time(detail::stack_appearance(fast_samples));
    if (slow_in.shape[3] != cfg_.input_size || slow_in.shape[4] != cfg_.input_size)
      validation_error("pathway expects " + std::to_string(cfg_.input_size) + "x" + std::to_string(cfg_.input_size) +
                       " inputs, got " + slow_in.shape_str());

    Var<T> slow = Var<T>::leaf(std::move(slow_in), false);
    Var<T> fast = Var<T>::leaf(std::move(fast_in), false);

    slow = relu(slow_stem_bn_(slow_stem_(slow), training));
    fast = relu(fast_stem_bn_(fast_stem_(fast), training));
    slow = fuse(slow, fast, 0, training);
    for (int i = 0; i < 5; ++i) {
      slow = slow_blocks_[i](slow, training);
      fast = fast_blocks_[i](fast, training);
      if (i < 4) slow = fuse(slow, fast, i + 1, training);
    }

    Var<T> pooled = concat_channels(global_avg_pool(slow), global_avg_pool(fast));
    return {fc_(pooled)};
  }

 private:
  int fused_channels(int i) const { return slow_ch_[i] + 2 * fast_ch_[i]; }

  Var<T> fuse(const Var<T>& slow, const Var<T>& fast, int i, bool) const {
    Var<T> lat = laterals_[i](fast);
    if (!laterals_enabled) lat = Var<T>::leaf(Tensor<T>::zeros(lat.value().shape), false);
    check_shape(lat.value(), {slow.value().shape[0], lat.value().shape[1], slow.value().shape[2],
                              slow.value().shape[3], slow.value().shape[4]},
                "lateral connection output");
    return concat_channels(slow, lat);
  }

  SlowFastConfig cfg_;
  std::array<int, 6> slow_ch_{}, fast_ch_{};
  Conv3dLayer<T> slow_stem_, fast_stem_;
  BatchNormLayer<T> slow_stem_bn_, fast_stem_bn_;
  std::array<slowfast_detail::ResBlock3d<T>, 5> slow_blocks_, fast_blocks_;
  std::array<Conv3dLayer<T>, 5> laterals_;
  LinearLayer<T> fc_;
};

}  // namespace maneuver
