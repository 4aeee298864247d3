#pragma once

#include <memory>
#include <string>
#include <vector>

#include "maneuver/core/rng.hpp"
#include "maneuver/nets/ops.hpp"

namespace maneuver {

// Parameter registry. Models register every trainable tensor and running
// buffer here under a stable name; the optimizer and the checkpoint code
// walk the registration order, which is fixed by construction order and so
// is identical run to run.
template <typename T>
class ParamStore {
 public:
  struct ParamEntry {
    std::string name;
    Var<T> var;
  };
  struct BufferEntry {
    std::string name;
    std::shared_ptr<Tensor<T>> tensor;
  };

  Var<T> param(const std::string& name, Tensor<T> init) {
    check_new_name(name);
    Var<T> v = Var<T>::leaf(std::move(init), true);
    params_.push_back({name, v});
    return v;
  }

  std::shared_ptr<Tensor<T>> buffer(const std::string& name, Tensor<T> init) {
    check_new_name("buffer:" + name);
    auto t = std::make_shared<Tensor<T>>(std::move(init));
    buffers_.push_back({name, t});
    return t;
  }

  std::vector<ParamEntry>& params() { return params_; }
  const std::vector<ParamEntry>& params() const { return params_; }
  std::vector<BufferEntry>& buffers() { return buffers_; }
  const std::vector<BufferEntry>& buffers() const { return buffers_; }

  int64_t parameter_count() const {
    int64_t n = 0;
    for (const auto& e : params_) n += e.var.node()->value.numel();
    return n;
  }

  void zero_grads() {
    for (auto& e : params_) {
      e.var.node()->ensure_grad();
      std::fill(e.var.node()->grad.data.begin(), e.var.node()->grad.data.end(), T(0));
    }
  }

 private:
  void check_new_name(const std::string& name) {
    for (const auto& e : params_) require(e.name != name, "duplicate parameter name: " + name);
    for (const auto& e : buffers_) require("buffer:" + e.name != name, "duplicate buffer name: " + name);
  }

  std::vector<ParamEntry> params_;
  std::vector<BufferEntry> buffers_;
};

namespace init {

// Kaiming-style normal initialization for rectified nets.
template <typename T>
Tensor<T> he_normal(std::vector<int64_t> shape, int64_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<T>(rng.normal() * std_dev);
  return t;
}

}  // namespace init

template <typename T>
struct Conv2dLayer {
  Var<T> w, b;
  int stride = 1, pad = 0;

  Conv2dLayer() = default;
  Conv2dLayer(ParamStore<T>& ps, Rng& rng, const std::string& name, int in_ch, int out_ch, int k, int stride_,
              int pad_)
      : stride(stride_), pad(pad_) {
    const int64_t fan_in = static_cast<int64_t>(in_ch) * k * k;
    w = ps.param(name + ".w", init::he_normal<T>({out_ch, in_ch, k, k}, fan_in, rng));
    b = ps.param(name + ".b", Tensor<T>::zeros({out_ch}));
  }

  Var<T> operator()(const Var<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct Conv3dLayer {
  Var<T> w, b;
  std::array<int, 3> stride = {1, 1, 1}, pad = {0, 0, 0};

  Conv3dLayer() = default;
  Conv3dLayer(ParamStore<T>& ps, Rng& rng, const std::string& name, int in_ch, int out_ch, std::array<int, 3> k,
              std::array<int, 3> stride_, std::array<int, 3> pad_)
      : stride(stride_), pad(pad_) {
    const int64_t fan_in = static_cast<int64_t>(in_ch) * k[0] * k[1] * k[2];
    w = ps.param(name + ".w", init::he_normal<T>({out_ch, in_ch, k[0], k[1], k[2]}, fan_in, rng));
    b = ps.param(name + ".b", Tensor<T>::zeros({out_ch}));
  }

  Var<T> operator()(const Var<T>& x) const { return conv3d(x, w, b, stride, pad); }
};

// Reinitializes a (kt,1,1) convolution with equal in/out channels to the
// temporal identity: center tap passes each channel through, other taps are
// zero. Used for temporal convolutions that should start as a no-op.
template <typename T>
void set_temporal_identity(Conv3dLayer<T>& layer) {
  auto& w = layer.w.node()->value;
  require(w.shape.size() == 5 && w.shape[0] == w.shape[1] && w.shape[3] == 1 && w.shape[4] == 1,
          "temporal identity needs a square-channel (kt,1,1) kernel");
  const int64_t C = w.shape[0], kt = w.shape[2];
  std::fill(w.data.begin(), w.data.end(), T(0));
  for (int64_t c = 0; c < C; ++c) w.data[(c * C + c) * kt + kt / 2] = T(1);
  auto& b = layer.b.node()->value;
  std::fill(b.data.begin(), b.data.end(), T(0));
}

template <typename T>
struct LinearLayer {
  Var<T> w, b;

  LinearLayer() = default;
  LinearLayer(ParamStore<T>& ps, Rng& rng, const std::string& name, int in_features, int out_features) {
    w = ps.param(name + ".w", init::he_normal<T>({out_features, in_features}, in_features, rng));
    b = ps.param(name + ".b", Tensor<T>::zeros({out_features}));
  }

  Var<T> operator()(const Var<T>& x) const { return linear(x, w, b); }
};

template <typename T>
struct BatchNormLayer {
  Var<T> gamma, beta;
  std::shared_ptr<Tensor<T>> running_mean, running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  BatchNormLayer() = default;
  BatchNormLayer(ParamStore<T>& ps, const std::string& name, int channels) {
    gamma = ps.param(name + ".gamma", Tensor<T>::full({channels}, T(1)));
    beta = ps.param(name + ".beta", Tensor<T>::zeros({channels}));
    running_mean = ps.buffer(name + ".running_mean", Tensor<T>::zeros({channels}));
    running_var = ps.buffer(name + ".running_var", Tensor<T>::full({channels}, T(1)));
  }

  Var<T> operator()(const Var<T>& x, bool training) const {
    return batchnorm(x, gamma, beta, *running_mean, *running_var, training, momentum, eps);
  }
};

}  // namespace maneuver
