#pragma once

#include "maneuver/nets/model.hpp"

namespace maneuver {

// Cross-stream multiplicative gate on a residual unit:
//
//   x_hat_a = f(x_a) + F(x_a (*) f(x_m), W_a)
//
// where (*) is the elementwise product, f the activation, and F the
// residual function with the appearance weights. With f(x_m) all ones this
// collapses to the plain residual unit f(x_a) + F(x_a).
template <typename T, typename ActFn, typename ResFn>
Var<T> multiplicative_gate(const Var<T>& x_a, const Var<T>& x_m, ActFn f, ResFn F) {
  check_shape(x_m.value(), x_a.value().shape, "multiplicative_gate motion input");
  return add(f(x_a), F(mul(x_a, f(x_m))));
}

struct StmConfig {
  double width_multiplier = 1.0;
  int input_size = 112;
  // Frames per clip both streams consume (time folded into the batch);
  // 0 means every frame of the window.
  int clip_frames = 0;
  // Residual blocks per stage; {3,4,6,3} is the 50-layer layout. Trailing
  // stages may be zeroed out for miniature test networks.
  std::array<int, 4> stage_blocks = {3, 4, 6, 3};
};

// How the appearance stream treats its gates. `multiplicative` is the real
// model; `ones` feeds a literal all-ones tensor through the same product
// (the gate identity); `disabled` skips the product entirely, giving the
// ungated residual twin the identity is checked against.
enum class GateMode { multiplicative, ones, disabled };

namespace stm_detail {

// Post-activation bottleneck whose shortcut carries f(x) = relu(x),
// projected by a strided 1x1 convolution when the shape changes. The trunk
// input is supplied by the caller so the appearance stream can gate it.
template <typename T>
struct Bottleneck {
  Conv2dLayer<T> conv1, conv2, conv3;
  BatchNormLayer<T> bn1, bn2, bn3;
  bool has_projection = false;
  Conv2dLayer<T> proj_conv;
  BatchNormLayer<T> proj_bn;

  Bottleneck() = default;

  Bottleneck(ParamStore<T>& ps, Rng& rng, const std::string& name, int in_ch, int mid_ch, int out_ch, int stride) {
    conv1 = Conv2dLayer<T>(ps, rng, name + ".conv1", in_ch, mid_ch, 1, 1, 0);
    bn1 = BatchNormLayer<T>(ps, name + ".bn1", mid_ch);
    conv2 = Conv2dLayer<T>(ps, rng, name + ".conv2", mid_ch, mid_ch, 3, stride, 1);
    bn2 = BatchNormLayer<T>(ps, name + ".bn2", mid_ch);
    conv3 = Conv2dLayer<T>(ps, rng, name + ".conv3", mid_ch, out_ch, 1, 1, 0);
    bn3 = BatchNormLayer<T>(ps, name + ".bn3", out_ch);
    has_projection = (in_ch != out_ch) || (stride != 1);
    if (has_projection) {
      proj_conv = Conv2dLayer<T>(ps, rng, name + ".proj", in_ch, out_ch, 1, stride, 0);
      proj_bn = BatchNormLayer<T>(ps, name + ".proj_bn", out_ch);
    }
  }

  Var<T> residual(const Var<T>& z, bool training) const {
    Var<T> h = relu(bn1(conv1(z), training));
    h = relu(bn2(conv2(h), training));
    return bn3(conv3(h), training);
  }

  // f_xm: gate activation f(x_m), or null for an ungated unit.
  Var<T> apply(const Var<T>& x, const Var<T>* f_xm, bool training) const {
    Var<T> sc = relu(x);
    if (has_projection) sc = proj_bn(proj_conv(sc), training);
    Var<T> trunk_in = f_xm ? mul(x, *f_xm) : x;
    return add(sc, residual(trunk_in, training));
  }
};

}  // namespace stm_detail

// Spatiotemporal multiplier network: two residual ConvNets of identical
// block layout run per frame (time folded into the batch). At every
// residual unit the motion activation gates the appearance trunk
// multiplicatively; 1-D temporal convolutions after the last two stages
// (identity-initialized, so they start as a no-op) mix information across
// frames. Each stream ends in its own head and the softmax outputs are
// averaged.
template <typename T>
class StmModel : public Model<T> {
 public:
  StmModel(const StmConfig& cfg, Rng& rng) : cfg_(cfg) {
    using detail::scaled_width;
    int total_blocks = 0;
    for (int b : cfg.stage_blocks) {
      require(b >= 0, "negative stage block count");
      total_blocks += b;
    }
    require(cfg.stage_blocks[0] >= 1, "first stage needs at least one block");

    const int stem_w = scaled_width(64, cfg.width_multiplier);
    a_stem_ = Conv2dLayer<T>(this->store_, rng, "appearance.stem", 3, stem_w, 7, 2, 3);
    a_stem_bn_ = BatchNormLayer<T>(this->store_, "appearance.stem_bn", stem_w);
    m_stem_ = Conv2dLayer<T>(this->store_, rng, "motion.stem", 2, stem_w, 7, 2, 3);
    m_stem_bn_ = BatchNormLayer<T>(this->store_, "motion.stem_bn", stem_w);

    const std::array<int, 4> mids = {scaled_width(64, cfg.width_multiplier), scaled_width(128, cfg.width_multiplier),
                                     scaled_width(256, cfg.width_multiplier),
                                     scaled_width(512, cfg.width_multiplier)};
    int in_ch = stem_w;
    for (int stage = 0; stage < 4; ++stage) {
      const int out_ch = mids[stage] * 4;
      for (int blk = 0; blk < cfg.stage_blocks[stage]; ++blk) {
        const int stride = (stage > 0 && blk == 0) ? 2 : 1;
        const std::string tag = ".s" + std::to_string(stage + 1) + "b" + std::to_string(blk + 1);
        a_blocks_.emplace_back(this->store_, rng, "appearance" + tag, in_ch, mids[stage], out_ch, stride);
        m_blocks_.emplace_back(this->store_, rng, "motion" + tag, in_ch, mids[stage], out_ch, stride);
        in_ch = out_ch;
      }
      stage_end_.push_back(static_cast<int>(a_blocks_.size()));
      stage_out_.push_back(cfg.stage_blocks[stage] > 0 ? out_ch : in_ch);
    }
    final_ch_ = in_ch;

    // Temporal convolutions after stages 3 and 4 where those stages exist.
    auto temporal = [&](const std::string& name, int ch) {
      Conv3dLayer<T> tc(this->store_, rng, name, ch, ch, {3, 1, 1}, {1, 1, 1}, {1, 0, 0});
      set_temporal_identity(tc);
      return tc;
    };
    if (cfg.stage_blocks[2] > 0) {
      a_t3_ = temporal("appearance.t3", stage_out_[2]);
      m_t3_ = temporal("motion.t3", stage_out_[2]);
    }
    if (cfg.stage_blocks[3] > 0) {
      a_t4_ = temporal("appearance.t4", stage_out_[3]);
      m_t4_ = temporal("motion.t4", stage_out_[3]);
    }

    a_fc_ = LinearLayer<T>(this->store_, rng, "appearance.fc", final_ch_, kNumClasses);
    m_fc_ = LinearLayer<T>(this->store_, rng, "motion.fc", final_ch_, kNumClasses);
  }

  std::string name() const override { return "stm"; }
  int stream_count() const override { return 2; }
  bool uses_flow() const override { return true; }
  int appearance_frames_wanted() const override { return cfg_.clip_frames; }
  int flow_pairs_wanted() const override { return cfg_.clip_frames; }

  GateMode gate_mode = GateMode::multiplicative;

  std::vector<Var<T>> forward(const std::vector<ClipSample<T>>& batch, bool training) override {
    Tensor<T> clips = detail::stack_appearance(batch);  // [B,T,3,H,W]
    Tensor<T> flow = detail::stack_flow(batch);         // [B,L,2,H,W]
    const int64_t B = clips.shape[0], Tn = clips.shape[1];
    if (flow.shape[1] != Tn)
      validation_error("appearance and motion clips must have equal length, got " + std::to_string(Tn) + " and " +
                       std::to_string(flow.shape[1]));
    if (clips.shape[3] != cfg_.input_size || clips.shape[4] != cfg_.input_size)
      validation_error("stream expects " + std::to_string(cfg_.input_size) + "x" + std::to_string(cfg_.input_size) +
                       " inputs, got " + clips.shape_str());

    clips.shape = {B * Tn, 3, clips.shape[3], clips.shape[4]};
    flow.shape = {B * Tn, 2, flow.shape[3], flow.shape[4]};
    Var<T> xa = Var<T>::leaf(std::move(clips), false);
    Var<T> xm = Var<T>::leaf(std::move(flow), false);

    xa = maxpool2d(relu(a_stem_bn_(a_stem_(xa), training)), 3, 2, 1);
    xm = maxpool2d(relu(m_stem_bn_(m_stem_(xm), training)), 3, 2, 1);

    int stage = 0;
    for (size_t i = 0; i < a_blocks_.size(); ++i) {
      Var<T> next_a;
      switch (gate_mode) {
        case GateMode::multiplicative: {
          Var<T> gate = relu(xm);
          next_a = a_blocks_[i].apply(xa, &gate, training);
          break;
        }
        case GateMode::ones: {
          Var<T> gate = Var<T>::leaf(Tensor<T>::full(xm.value().shape, T(1)), false);
          next_a = a_blocks_[i].apply(xa, &gate, training);
          break;
        }
        case GateMode::disabled:
          next_a = a_blocks_[i].apply(xa, nullptr, training);
          break;
      }
      xm = m_blocks_[i].apply(xm, nullptr, training);
      xa = next_a;

      while (stage < 4 && static_cast<int>(i) + 1 == stage_end_[stage]) {
        if (stage == 2 && cfg_.stage_blocks[2] > 0) {
          xa = temporal_mix(a_t3_, xa, B, Tn);
          xm = temporal_mix(m_t3_, xm, B, Tn);
        }
        if (stage == 3 && cfg_.stage_blocks[3] > 0) {
          xa = temporal_mix(a_t4_, xa, B, Tn);
          xm = temporal_mix(m_t4_, xm, B, Tn);
        }
        ++stage;
      }
    }

    Var<T> a_logits = head(a_fc_, xa, B, Tn);
    Var<T> m_logits = head(m_fc_, xm, B, Tn);
    return {a_logits, m_logits};
  }

 private:
  // Runs a (3,1,1) temporal convolution over frame-folded activations.
  static Var<T> temporal_mix(const Conv3dLayer<T>& tc, const Var<T>& x, int64_t B, int64_t Tn) {
    const auto s = x.value().shape;  // [B*T, C, H, W]
    Var<T> h = reshape(x, {B, Tn, s[1], s[2], s[3]});
    h = permute(h, {0, 2, 1, 3, 4});
    h = tc(h);
    h = permute(h, {0, 2, 1, 3, 4});
    return reshape(h, {B * Tn, s[1], s[2], s[3]});
  }

  Var<T> head(const LinearLayer<T>& fc, const Var<T>& x, int64_t B, int64_t Tn) const {
    Var<T> h = global_avg_pool(relu(x));  // [B*T, C]
    Var<T> logits = fc(h);                // [B*T, 3]
    logits = reshape(logits, {B, Tn, static_cast<int64_t>(kNumClasses)});
    return mean_frames(logits);
  }

  StmConfig cfg_;
  Conv2dLayer<T> a_stem_, m_stem_;
  BatchNormLayer<T> a_stem_bn_, m_stem_bn_;
  std::vector<stm_detail::Bottleneck<T>> a_blocks_, m_blocks_;
  std::vector<int> stage_end_;
  std::vector<int> stage_out_;
  int final_ch_ = 0;
  Conv3dLayer<T> a_t3_, a_t4_, m_t3_, m_t4_;
  LinearLayer<T> a_fc_, m_fc_;
};

}  // namespace maneuver
