// Architecture-level checks for the five classifiers: output validity,
// fusion arithmetic, the gate identity, inflation behavior at the model
// level, pathway sampling invariants, shape validation, and checkpoint
// round trips. Miniature widths keep everything desk-fast.

#include <catch2/catch_amalgamated.hpp>

#include "helpers.hpp"
#include "maneuver/nets/checkpoint.hpp"
#include "maneuver/nets/i3d.hpp"
#include "maneuver/nets/slowfast.hpp"
#include "maneuver/nets/stm.hpp"
#include "maneuver/nets/two_stream.hpp"

using namespace maneuver;

namespace {

template <typename T>
ClipSample<T> random_clip(Rng& rng, int64_t frames, int64_t pairs, int64_t size) {
  ClipSample<T> s;
  s.appearance = Tensor<T>({frames, 3, size, size});
  for (auto& v : s.appearance.data) v = static_cast<T>(rng.uniform(-0.5, 0.5));
  if (pairs > 0) {
    s.flow = Tensor<T>({pairs, 2, size, size});
    for (auto& v : s.flow.data) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  }
  return s;
}

template <typename T>
std::vector<Tensor<T>> eval_logits(Model<T>& model, const std::vector<ClipSample<T>>& batch) {
  NoGradGuard ng;
  auto streams = model.forward(batch, false);
  std::vector<Tensor<T>> out;
  for (auto& s : streams) out.push_back(s.value());
  return out;
}

void require_valid_scores(const std::vector<ClassScores>& scores) {
  for (const auto& s : scores) {
    double sum = 0;
    for (int j = 0; j < kNumClasses; ++j) {
      REQUIRE(s.probabilities[j] >= 0.0);
      REQUIRE(s.probabilities[j] <= 1.0);
      sum += s.probabilities[j];
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
    // logits stay consistent with the probabilities
    ClassScores re = scores_from_logits(s.logits);
    for (int j = 0; j < kNumClasses; ++j)
      REQUIRE(re.probabilities[j] == Catch::Approx(s.probabilities[j]).margin(1e-9));
  }
}

}  // namespace

TEST_CASE("every model emits a valid distribution and is deterministic at inference") {
  const int S = 32;
  Rng data_rng(1001);

  auto check = [&](auto make_model, int64_t frames, int64_t pairs) {
    Rng r1(7), r2(7);
    auto m1 = make_model(r1);
    auto m2 = make_model(r2);
    std::vector<ClipSample<float>> batch;
    batch.push_back(random_clip<float>(data_rng, frames, pairs, S));
    batch.push_back(random_clip<float>(data_rng, frames, pairs, S));
    auto scores1 = predict(*m1, batch);
    auto scores2 = predict(*m2, batch);
    REQUIRE(scores1.size() == 2);
    require_valid_scores(scores1);
    // same seed, same input -> bitwise identical probabilities
    for (size_t i = 0; i < scores1.size(); ++i)
      for (int j = 0; j < kNumClasses; ++j) REQUIRE(scores1[i].probabilities[j] == scores2[i].probabilities[j]);
  };

  SECTION("baseline") {
    TwoStreamConfig cfg;
    cfg.width_multiplier = 0.0625;
    cfg.input_size = S;
    check([&](Rng& r) { return std::make_unique<BaselineModel<float>>(cfg, r); }, 4, 0);
  }
  SECTION("disjoint") {
    TwoStreamConfig cfg;
    cfg.width_multiplier = 0.0625;
    cfg.input_size = S;
    cfg.flow_pairs = 5;
    check([&](Rng& r) { return std::make_unique<DisjointModel<float>>(cfg, r); }, 4, 5);
  }
  SECTION("i3d") {
    I3dConfig cfg;
    cfg.width_multiplier = 0.05;
    cfg.input_size = S;
    check([&](Rng& r) { return std::make_unique<I3dModel<float>>(cfg, r); }, 16, 16);
  }
  SECTION("stm") {
    StmConfig cfg;
    cfg.width_multiplier = 0.0625;
    cfg.input_size = S;
    cfg.stage_blocks = {1, 1, 1, 1};
    check([&](Rng& r) { return std::make_unique<StmModel<float>>(cfg, r); }, 3, 3);
  }
  SECTION("slowfast") {
    SlowFastConfig cfg;
    cfg.width_multiplier = 0.05;
    cfg.input_size = S;
    check([&](Rng& r) { return std::make_unique<SlowFastModel<float>>(cfg, r); }, 64, 0);
  }
}

TEST_CASE("late fusion arithmetic") {
  SECTION("two one-hot streams average to (0.5, 0.5, 0)") {
    // logit margins of 100 make the softmax one-hot to beyond double precision
    Tensor<float> a({1, 3});
    a.data = {100.f, 0.f, 0.f};
    Tensor<float> b({1, 3});
    b.data = {0.f, 100.f, 0.f};
    Tensor<float> fused = fuse_stream_probabilities<float>({a, b});
    REQUIRE(fused.at2(0, 0) == Catch::Approx(0.5).margin(1e-9));
    REQUIRE(fused.at2(0, 1) == Catch::Approx(0.5).margin(1e-9));
    REQUIRE(fused.at2(0, 2) == Catch::Approx(0.0).margin(1e-9));
  }

  SECTION("identical stream distributions fuse to themselves") {
    Tensor<float> a({2, 3});
    a.data = {0.3f, -1.2f, 2.0f, 1.0f, 1.0f, 1.0f};
    Tensor<float> fused = fuse_stream_probabilities<float>({a, a});
    Tensor<float> single = fuse_stream_probabilities<float>({a});
    for (size_t i = 0; i < fused.data.size(); ++i) REQUIRE(fused.data[i] == Catch::Approx(single.data[i]).margin(1e-7));
  }

  SECTION("disjoint fused output equals an external softmax-mean recomputation") {
    const int S = 32;
    TwoStreamConfig cfg;
    cfg.width_multiplier = 0.0625;
    cfg.input_size = S;
    cfg.flow_pairs = 4;
    Rng rng(9);
    DisjointModel<float> model(cfg, rng);
    Rng data_rng(10);
    std::vector<ClipSample<float>> batch = {random_clip<float>(data_rng, 3, 4, S),
                                            random_clip<float>(data_rng, 3, 4, S)};
    auto logits = eval_logits(model, batch);
    REQUIRE(logits.size() == 2);
    auto scores = predict(model, batch);
    for (int64_t i = 0; i < 2; ++i) {
      // recompute the fusion with scalar code
      double fused[3] = {0, 0, 0};
      for (const auto& stream : logits) {
        double mx = -1e30, denom = 0;
        for (int j = 0; j < 3; ++j) mx = std::max(mx, double(stream.at2(i, j)));
        for (int j = 0; j < 3; ++j) denom += std::exp(double(stream.at2(i, j)) - mx);
        for (int j = 0; j < 3; ++j) fused[j] += std::exp(double(stream.at2(i, j)) - mx) / denom;
      }
      for (int j = 0; j < 3; ++j) REQUIRE(scores[i].probabilities[j] == Catch::Approx(fused[j] / 2).margin(1e-6));
    }
  }

  SECTION("multi_stream_loss is the mean of the per-stream cross entropies") {
    Rng rng(11);
    Tensor<double> la({2, 3}), lb({2, 3});
    for (auto& v : la.data) v = rng.uniform(-2, 2);
    for (auto& v : lb.data) v = rng.uniform(-2, 2);
    Var<double> a = Var<double>::leaf(la, false), b = Var<double>::leaf(lb, false);
    const std::vector<int> labels = {2, 0};
    Var<double> joint = multi_stream_loss<double>({a, b}, labels);
    const double ca = cross_entropy(a, labels).value().data[0];
    const double cb = cross_entropy(b, labels).value().data[0];
    REQUIRE(joint.value().data[0] == Catch::Approx((ca + cb) / 2).epsilon(1e-12));
  }
}

TEST_CASE("baseline model specifics") {
  const int S = 32;
  TwoStreamConfig cfg;
  cfg.width_multiplier = 0.0625;
  cfg.input_size = S;
  Rng rng(21);
  BaselineModel<float> model(cfg, rng);
  Rng data_rng(22);
  std::vector<ClipSample<float>> batch = {random_clip<float>(data_rng, 4, 0, S)};

  SECTION("permuting the class-head weights permutes the probabilities") {
    auto before = predict(model, batch);
    // swap classes 1 and 2 in the final layer (rows of w, entries of b)
    auto& entries = model.params().params();
    for (auto& e : entries) {
      if (e.name == "appearance.fc3.w") {
        auto& w = e.var.mutable_value();
        const int64_t F = w.shape[1];
        for (int64_t j = 0; j < F; ++j) std::swap(w.data[1 * F + j], w.data[2 * F + j]);
      } else if (e.name == "appearance.fc3.b") {
        std::swap(e.var.mutable_value().data[1], e.var.mutable_value().data[2]);
      }
    }
    auto after = predict(model, batch);
    REQUIRE(after[0].probabilities[0] == Catch::Approx(before[0].probabilities[0]).margin(1e-7));
    REQUIRE(after[0].probabilities[1] == Catch::Approx(before[0].probabilities[2]).margin(1e-7));
    REQUIRE(after[0].probabilities[2] == Catch::Approx(before[0].probabilities[1]).margin(1e-7));
  }

  SECTION("per-frame logits are averaged: frame order does not matter") {
    std::vector<ClipSample<float>> reversed = batch;
    auto& t = reversed[0].appearance;
    Tensor<float> rev = t;
    const int64_t per = t.numel() / t.shape[0];
    for (int64_t f = 0; f < t.shape[0]; ++f)
      std::copy_n(t.data.begin() + f * per, per, rev.data.begin() + (t.shape[0] - 1 - f) * per);
    reversed[0].appearance = rev;
    auto a = predict(model, batch), b = predict(model, reversed);
    for (int j = 0; j < 3; ++j) REQUIRE(a[0].probabilities[j] == Catch::Approx(b[0].probabilities[j]).margin(1e-6));
  }

  SECTION("wrong spatial size is rejected") {
    std::vector<ClipSample<float>> bad = {random_clip<float>(data_rng, 4, 0, S / 2)};
    REQUIRE_THROWS_AS(predict(model, bad), Error);
  }
}

TEST_CASE("disjoint model rejects a mismatched flow stack") {
  const int S = 32;
  TwoStreamConfig cfg;
  cfg.width_multiplier = 0.0625;
  cfg.input_size = S;
  cfg.flow_pairs = 6;
  Rng rng(31);
  DisjointModel<float> model(cfg, rng);
  Rng data_rng(32);
  std::vector<ClipSample<float>> bad = {random_clip<float>(data_rng, 4, 5, S)};  // 5 pairs, model wants 6
  REQUIRE_THROWS_AS(predict(model, bad), Error);
}

TEST_CASE("i3d model specifics") {
  const int S = 32;
  I3dConfig cfg;
  cfg.width_multiplier = 0.05;
  cfg.input_size = S;
  Rng rng(41);
  I3dModel<float> model(cfg, rng);
  Rng data_rng(42);

  SECTION("clip length other than 16 is rejected") {
    std::vector<ClipSample<float>> bad = {random_clip<float>(data_rng, 12, 16, S)};
    REQUIRE_THROWS_AS(predict(model, bad), Error);
    std::vector<ClipSample<float>> bad_flow = {random_clip<float>(data_rng, 16, 12, S)};
    REQUIRE_THROWS_AS(predict(model, bad_flow), Error);
  }

  SECTION("inflated initialization is time-reversal invariant; broken palindromes are not") {
    // Inflation copies the same 2D kernel into every temporal tap, so every
    // kernel starts palindromic in time. Together with the symmetric pooling
    // windows that makes the untrained network invariant to playing a clip
    // backwards. Direction sensitivity has to be learned.
    std::vector<ClipSample<float>> batch = {random_clip<float>(data_rng, 16, 16, S)};
    std::vector<ClipSample<float>> reversed = batch;
    for (Tensor<float>* t : {&reversed[0].appearance, &reversed[0].flow}) {
      Tensor<float> rev = *t;
      const int64_t per = t->numel() / t->shape[0];
      for (int64_t f = 0; f < t->shape[0]; ++f)
        std::copy_n(t->data.begin() + f * per, per, rev.data.begin() + (t->shape[0] - 1 - f) * per);
      *t = rev;
    }
    auto max_logit_diff = [&] {
      auto a = eval_logits(model, batch), b = eval_logits(model, reversed);
      double diff = 0;
      for (size_t s = 0; s < a.size(); ++s)
        for (size_t i = 0; i < a[s].data.size(); ++i)
          diff = std::max(diff, std::abs(double(a[s].data[i] - b[s].data[i])));
      return diff;
    };
    REQUIRE(max_logit_diff() <= 1e-5);

    // Skew the first temporal tap of both stem kernels. The kernels are no
    // longer palindromic, so reversal must change the logits.
    for (auto& e : model.params().params()) {
      if (e.name != "appearance.conv1.w" && e.name != "motion.conv1.w") continue;
      auto& w = e.var.mutable_value();
      const int64_t F = w.shape[0], C = w.shape[1], kt = w.shape[2], ks = w.shape[3] * w.shape[4];
      for (int64_t f = 0; f < F; ++f)
        for (int64_t c = 0; c < C; ++c)
          for (int64_t s = 0; s < ks; ++s) w.data[((f * C + c) * kt + 0) * ks + s] += 0.05f;
    }
    REQUIRE(max_logit_diff() > 1e-4);
  }
}

TEST_CASE("stm gate identity: all-ones gates equal the ungated twin") {
  const int S = 32;
  StmConfig cfg;
  cfg.width_multiplier = 0.0625;
  cfg.input_size = S;
  cfg.stage_blocks = {2, 2, 1, 1};
  Rng rng(51);
  StmModel<float> model(cfg, rng);
  Rng data_rng(52);
  std::vector<ClipSample<float>> batch = {random_clip<float>(data_rng, 3, 3, S),
                                          random_clip<float>(data_rng, 3, 3, S)};

  model.gate_mode = GateMode::ones;
  auto with_ones = eval_logits(model, batch);
  model.gate_mode = GateMode::disabled;
  auto without = eval_logits(model, batch);
  model.gate_mode = GateMode::multiplicative;
  auto gated = eval_logits(model, batch);

  double max_diff = 0, gate_effect = 0;
  for (size_t s = 0; s < with_ones.size(); ++s)
    for (size_t i = 0; i < with_ones[s].data.size(); ++i) {
      max_diff = std::max(max_diff, std::abs(double(with_ones[s].data[i] - without[s].data[i])));
      gate_effect = std::max(gate_effect, std::abs(double(gated[s].data[i] - without[s].data[i])));
    }
  REQUIRE(max_diff <= 1e-5);
  // the real gates are not a no-op on the appearance stream
  REQUIRE(gate_effect > 1e-6);
  // ... but the motion stream is identical in all modes (index 1)
  double motion_diff = 0;
  for (size_t i = 0; i < gated[1].data.size(); ++i)
    motion_diff = std::max(motion_diff, std::abs(double(gated[1].data[i] - without[1].data[i])));
  REQUIRE(motion_diff == 0.0);
}

TEST_CASE("stm miniature passes a full finite-difference check") {
  // Two gated blocks in double precision; gradients of the joint loss with
  // respect to every parameter (sampled) must match central differences.
  const int S = 16;
  StmConfig cfg;
  cfg.width_multiplier = 0.0625;
  cfg.input_size = S;
  cfg.stage_blocks = {1, 1, 0, 0};
  Rng rng(61);
  StmModel<double> model(cfg, rng);
  Rng data_rng(62);
  std::vector<ClipSample<double>> batch = {random_clip<double>(data_rng, 2, 2, S)};
  const std::vector<int> labels = {1};

  auto build = [&] {
    model.params().zero_grads();
    auto streams = model.forward(batch, true);
    return multi_stream_loss(streams, labels);
  };

  Var<double> loss = build();
  backward(loss);
  std::vector<Tensor<double>> analytic;
  for (auto& e : model.params().params()) analytic.push_back(e.var.grad());

  Rng pick(63);
  size_t checked = 0;
  auto& entries = model.params().params();
  for (size_t li = 0; li < entries.size(); ++li) {
    auto& leaf = entries[li].var;
    const int64_t n = leaf.value().numel();
    const size_t count = std::min<size_t>(3, static_cast<size_t>(n));
    for (size_t c = 0; c < count; ++c) {
      const int64_t idx = pick.uniform_int(n);
      double& slot = leaf.mutable_value().data[static_cast<size_t>(idx)];
      const double saved = slot;
      const double h = 1e-5 * std::max(1.0, std::abs(saved));
      slot = saved + h;
      const double lp = build().value().data[0];
      slot = saved - h;
      const double lm = build().value().data[0];
      slot = saved;
      const double numeric = (lp - lm) / (2 * h);
      const double ana = analytic[li].data[static_cast<size_t>(idx)];
      const double rel = std::abs(numeric - ana) / std::max({1.0, std::abs(numeric), std::abs(ana)});
      INFO(entries[li].name << " element " << idx << ": analytic " << ana << " numeric " << numeric);
      REQUIRE(rel <= 1e-4);
      ++checked;
    }
  }
  REQUIRE(checked > 50);
}

TEST_CASE("slowfast pathway sampling") {
  SlowFastConfig cfg;

  SECTION("64-frame clip: slow indices every 16, fast stride 2") {
    auto idx = slowfast_sample(64, cfg);
    REQUIRE(idx.slow == std::vector<int64_t>{0, 16, 32, 48});
    REQUIRE(idx.fast.size() == 32);
    for (size_t i = 0; i < idx.fast.size(); ++i) REQUIRE(idx.fast[i] == static_cast<int64_t>(2 * i));
  }

  SECTION("16-frame clip: one slow frame, eight fast frames") {
    auto idx = slowfast_sample(16, cfg);
    REQUIRE(idx.slow == std::vector<int64_t>{0});
    REQUIRE(idx.fast == std::vector<int64_t>{0, 2, 4, 6, 8, 10, 12, 14});
  }

  SECTION("|fast| = alpha * |slow| for every length 16..128") {
    for (int64_t len = 16; len <= 128; ++len) {
      auto idx = slowfast_sample(len, cfg);
      REQUIRE(idx.fast.size() == static_cast<size_t>(cfg.alpha) * idx.slow.size());
      for (int64_t v : idx.slow) {
        REQUIRE(v < len);
        REQUIRE(v % cfg.tau == 0);
      }
      for (int64_t v : idx.fast) REQUIRE(v < len);
    }
  }

  SECTION("clips shorter than tau are rejected") { REQUIRE_THROWS_AS(slowfast_sample(15, cfg), Error); }
}

TEST_CASE("slowfast model structure") {
  const int S = 32;
  SlowFastConfig cfg;
  cfg.width_multiplier = 0.05;
  cfg.input_size = S;
  Rng rng(71);
  SlowFastModel<float> model(cfg, rng);

  SECTION("fast channels are round(beta * slow) at every stage") {
    auto stages = model.stage_channels();
    REQUIRE(stages.size() == 6);
    for (auto [slow_c, fast_c] : stages) {
      REQUIRE(fast_c == static_cast<int>(std::lround(cfg.beta * slow_c)));
      REQUIRE(fast_c >= 1);
    }
  }

  SECTION("ablating the lateral connections changes the logits") {
    Rng data_rng(72);
    std::vector<ClipSample<float>> batch = {random_clip<float>(data_rng, 64, 0, S)};
    auto with_laterals = eval_logits(model, batch);
    model.laterals_enabled = false;
    auto without = eval_logits(model, batch);
    model.laterals_enabled = true;
    double diff = 0;
    for (size_t i = 0; i < with_laterals[0].data.size(); ++i)
      diff = std::max(diff, std::abs(double(with_laterals[0].data[i] - without[0].data[i])));
    REQUIRE(diff > 1e-6);
  }

  SECTION("invalid configurations are rejected") {
    SlowFastConfig bad = cfg;
    bad.alpha = 5;  // does not divide tau = 16
    Rng r(1);
    REQUIRE_THROWS_AS(SlowFastModel<float>(bad, r), Error);
  }
}

TEST_CASE("checkpoint round trip") {
  const int S = 32;
  TwoStreamConfig cfg;
  cfg.width_multiplier = 0.0625;
  cfg.input_size = S;
  cfg.flow_pairs = 4;
  Rng rng(81);
  DisjointModel<float> model(cfg, rng);
  Rng data_rng(82);
  std::vector<ClipSample<float>> batch = {random_clip<float>(data_rng, 3, 4, S)};
  auto before = predict(model, batch);

  const std::string dir = testutil::scratch_dir("ckpt");
  const std::string path = dir + "/model.ckpt";
  CheckpointMeta meta;
  meta.model = model.name();
  meta.config = {{"width_multiplier", cfg.width_multiplier}};
  meta.seed = 81;
  meta.step = 1234;
  write_checkpoint(path, meta, model.params());

  SECTION("weights restore bitwise and predictions match") {
    // scramble every parameter, then load back
    for (auto& e : model.params().params())
      for (auto& v : e.var.mutable_value().data) v += 0.25f;
    for (auto& e : model.params().buffers())
      for (auto& v : e.tensor->data) v += 0.25f;
    auto scrambled = predict(model, batch);
    bool changed = false;
    for (int j = 0; j < 3; ++j) changed = changed || scrambled[0].probabilities[j] != before[0].probabilities[j];
    REQUIRE(changed);

    CheckpointMeta loaded = load_checkpoint(path, model.params());
    REQUIRE(loaded.model == "disjoint");
    REQUIRE(loaded.step == 1234);
    REQUIRE(loaded.seed == 81);
    auto after = predict(model, batch);
    for (int j = 0; j < 3; ++j) REQUIRE(after[0].probabilities[j] == before[0].probabilities[j]);
  }

  SECTION("loading into a structurally different model is rejected") {
    TwoStreamConfig other = cfg;
    other.flow_pairs = 5;  // changes motion conv1 shape
    Rng r2(83);
    DisjointModel<float> different(other, r2);
    REQUIRE_THROWS_AS(load_checkpoint(path, different.params()), Error);
    BaselineModel<float> baseline(cfg, r2);
    REQUIRE_THROWS_AS(load_checkpoint(path, baseline.params()), Error);
  }

  SECTION("truncated files and bad magic are rejected") {
    auto bytes = read_binary_file(path);
    write_binary_file(dir + "/short.ckpt",
                      std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size() / 2));
    DisjointModel<float> fresh(cfg, rng);
    REQUIRE_THROWS_AS(load_checkpoint(dir + "/short.ckpt", fresh.params()), Error);
    write_binary_file(dir + "/bad.ckpt", "NOPE this is not a checkpoint");
    REQUIRE_THROWS_AS(load_checkpoint(dir + "/bad.ckpt", fresh.params()), Error);
    REQUIRE_THROWS_AS(read_checkpoint_meta(dir + "/bad.ckpt"), Error);
  }
}
