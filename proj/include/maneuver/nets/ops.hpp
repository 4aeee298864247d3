#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "maneuver/nets/autograd.hpp"

namespace maneuver {

// Differentiable tensor ops. Convolutions lower to im2col plus an Eigen
// GEMM, one sample at a time so the column buffer stays small; backward
// recomputes the columns instead of caching them. All accumulation loops
// run serially in a fixed order.

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

namespace detail {

inline int64_t conv_out_dim(int64_t in, int64_t k, int64_t stride, int64_t pad) {
  int64_t span = in + 2 * pad - k;
  if (span < 0) validation_error("kernel of size " + std::to_string(k) + " does not fit input of size " +
                                 std::to_string(in) + " with padding " + std::to_string(pad));
  return span / stride + 1;
}

}  // namespace detail

// ---- elementwise ----

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  check_shape(a.value(), b.value().shape, "add");
  Tensor<T> out(a.value().shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.value().data[i] + b.value().data[i];
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn](VarNode<T>& n) {
    accumulate_grad(*an, n.grad);
    accumulate_grad(*bn, n.grad);
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  check_shape(a.value(), b.value().shape, "mul");
  Tensor<T> out(a.value().shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = a.value().data[i] * b.value().data[i];
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn](VarNode<T>& n) {
    if (an->requires_grad) {
      Tensor<T> da(n.value.shape);
      for (size_t i = 0; i < da.data.size(); ++i) da.data[i] = n.grad.data[i] * bn->value.data[i];
      accumulate_grad(*an, da);
    }
    if (bn->requires_grad) {
      Tensor<T> db(n.value.shape);
      for (size_t i = 0; i < db.data.size(); ++i) db.data[i] = n.grad.data[i] * an->value.data[i];
      accumulate_grad(*bn, db);
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T c) {
  Tensor<T> out(x.value().shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = x.value().data[i] * c;
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, c](VarNode<T>& n) {
    if (!xn->requires_grad) return;
    Tensor<T> dx(n.value.shape);
    for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] = n.grad.data[i] * c;
    accumulate_grad(*xn, dx);
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out(x.value().shape);
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = x.value().data[i] > T(0) ? x.value().data[i] : T(0);
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn](VarNode<T>& n) {
    if (!xn->requires_grad) return;
    Tensor<T> dx(n.value.shape);
    for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] = xn->value.data[i] > T(0) ? n.grad.data[i] : T(0);
    accumulate_grad(*xn, dx);
  });
}

// ---- shape ops ----

template <typename T>
Var<T> reshape(const Var<T>& x, std::vector<int64_t> shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  require(n == x.value().numel(), "reshape element count mismatch");
  Tensor<T> out(std::move(shape));
  out.data = x.value().data;
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn](VarNode<T>& n) {
    if (!xn->requires_grad) return;
    Tensor<T> dx(xn->value.shape);
    dx.data = n.grad.data;
    accumulate_grad(*xn, dx);
  });
}

namespace detail {

inline std::vector<int64_t> strides_of(const std::vector<int64_t>& shape) {
  std::vector<int64_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i) s[i] = s[i + 1] * shape[i + 1];
  return s;
}

// Copies src into dst where dst dimension i is src dimension order[i].
template <typename T>
void permute_copy(const Tensor<T>& src, Tensor<T>& dst, const std::vector<int>& order) {
  const auto src_strides = strides_of(src.shape);
  const auto dst_strides = strides_of(dst.shape);
  const size_t rank = order.size();
  std::vector<int64_t> idx(rank, 0);
  const int64_t total = src.numel();
  for (int64_t flat = 0; flat < total; ++flat) {
    // idx enumerates dst coordinates in row-major order, so dst writes are
    // sequential; the source offset is gathered through the permutation.
    int64_t src_off = 0;
    for (size_t i = 0; i < rank; ++i) src_off += idx[i] * src_strides[order[i]];
    dst.data[flat] = src.data[src_off];
    for (int i = static_cast<int>(rank) - 1; i >= 0; --i) {
      if (++idx[i] < dst.shape[i]) break;
      idx[i] = 0;
    }
  }
}

}  // namespace detail

// Reorders dimensions: out dimension i is input dimension order[i].
template <typename T>
Var<T> permute(const Var<T>& x, std::vector<int> order) {
  const auto& in_shape = x.value().shape;
  require(order.size() == in_shape.size(), "permute order rank mismatch");
  std::vector<int64_t> out_shape(order.size());
  std::vector<bool> seen(order.size(), false);
  for (size_t i = 0; i < order.size(); ++i) {
    require(order[i] >= 0 && order[i] < static_cast<int>(order.size()) && !seen[order[i]], "permute order invalid");
    seen[order[i]] = true;
    out_shape[i] = in_shape[order[i]];
  }
  Tensor<T> out(out_shape);
  detail::permute_copy(x.value(), out, order);
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, order](VarNode<T>& n) {
    if (!xn->requires_grad) return;
    // Inverse permutation routes the gradient back.
    std::vector<int> inverse(order.size());
    for (size_t i = 0; i < order.size(); ++i) inverse[order[i]] = static_cast<int>(i);
    Tensor<T> dx(xn->value.shape);
    detail::permute_copy(n.grad, dx, inverse);
    accumulate_grad(*xn, dx);
  });
}

// Concatenates along dimension 1 (channels). Ranks and all other dims must match.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const auto& sa = a.value().shape;
  const auto& sb = b.value().shape;
  require(sa.size() == sb.size() && sa.size() >= 2, "concat_channels rank mismatch");
  for (size_t i = 0; i < sa.size(); ++i)
    if (i != 1) require(sa[i] == sb[i], "concat_channels dim mismatch");
  std::vector<int64_t> out_shape = sa;
  out_shape[1] += sb[1];
  // Treat each tensor as [outer, channels*inner] blocks.
  int64_t outer = sa[0];
  int64_t inner = 1;
  for (size_t i = 2; i < sa.size(); ++i) inner *= sa[i];
  const int64_t block_a = sa[1] * inner, block_b = sb[1] * inner;
  Tensor<T> out(out_shape);
  for (int64_t o = 0; o < outer; ++o) {
    std::copy_n(a.value().data.begin() + o * block_a, block_a, out.data.begin() + o * (block_a + block_b));
    std::copy_n(b.value().data.begin() + o * block_b, block_b,
                out.data.begin() + o * (block_a + block_b) + block_a);
  }
  auto an = a.node(), bn = b.node();
  return make_op<T>(std::move(out), {a, b}, [an, bn, outer, block_a, block_b](VarNode<T>& n) {
    if (an->requires_grad) {
      Tensor<T> da(an->value.shape);
      for (int64_t o = 0; o < outer; ++o)
        std::copy_n(n.grad.data.begin() + o * (block_a + block_b), block_a, da.data.begin() + o * block_a);
      accumulate_grad(*an, da);
    }
    if (bn->requires_grad) {
      Tensor<T> db(bn->value.shape);
      for (int64_t o = 0; o < outer; ++o)
        std::copy_n(n.grad.data.begin() + o * (block_a + block_b) + block_a, block_b,
                    db.data.begin() + o * block_b);
      accumulate_grad(*bn, db);
    }
  });
}

// ---- linear ----

// x: [B, F], w: [K, F], b: [K] -> [B, K]
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  require(x.value().shape.size() == 2 && w.value().shape.size() == 2 && b.value().shape.size() == 1,
          "linear expects x [B,F], w [K,F], b [K]");
  const int64_t B = x.value().shape[0], F = x.value().shape[1], K = w.value().shape[0];
  require(w.value().shape[1] == F && b.value().shape[0] == K, "linear shape mismatch");
  Tensor<T> out({B, K});
  {
    ConstMatMap<T> xm(x.value().data.data(), B, F);
    ConstMatMap<T> wm(w.value().data.data(), K, F);
    MatMap<T> om(out.data.data(), B, K);
    om.noalias() = xm * wm.transpose();
    for (int64_t i = 0; i < B; ++i)
      for (int64_t k = 0; k < K; ++k) om(i, k) += b.value().data[k];
  }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return make_op<T>(std::move(out), {x, w, b}, [xn, wn, bn, B, F, K](VarNode<T>& n) {
    ConstMatMap<T> gm(n.grad.data.data(), B, K);
    if (xn->requires_grad) {
      Tensor<T> dx({B, F});
      ConstMatMap<T> wm(wn->value.data.data(), K, F);
      MatMap<T>(dx.data.data(), B, F).noalias() = gm * wm;
      accumulate_grad(*xn, dx);
    }
    if (wn->requires_grad) {
      Tensor<T> dw({K, F});
      ConstMatMap<T> xm(xn->value.data.data(), B, F);
      MatMap<T>(dw.data.data(), K, F).noalias() = gm.transpose() * xm;
      accumulate_grad(*wn, dw);
    }
    if (bn->requires_grad) {
      Tensor<T> db({K});
      for (int64_t k = 0; k < K; ++k) db.data[k] = gm.col(k).sum();
      accumulate_grad(*bn, db);
    }
  });
}

// ---- 2d convolution ----

namespace detail {

// col has C*kh*kw rows and OH*OW columns; x_sample points at one sample
// [C,H,W]. Out-of-image taps read zero.
template <typename T>
void im2col(const T* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
            int64_t OH, int64_t OW, T* col) {
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t dy = 0; dy < kh; ++dy) {
      for (int64_t dx = 0; dx < kw; ++dx) {
        T* row = col + ((c * kh + dy) * kw + dx) * OH * OW;
        for (int64_t oy = 0; oy < OH; ++oy) {
          const int64_t iy = oy * stride - pad + dy;
          if (iy < 0 || iy >= H) {
            std::fill_n(row + oy * OW, OW, T(0));
            continue;
          }
          const T* src = x + (c * H + iy) * W;
          for (int64_t ox = 0; ox < OW; ++ox) {
            const int64_t ix = ox * stride - pad + dx;
            row[oy * OW + ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t stride, int64_t pad,
            int64_t OH, int64_t OW, T* x) {
  std::fill_n(x, C * H * W, T(0));
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t dy = 0; dy < kh; ++dy) {
      for (int64_t dx = 0; dx < kw; ++dx) {
        const T* row = col + ((c * kh + dy) * kw + dx) * OH * OW;
        for (int64_t oy = 0; oy < OH; ++oy) {
          const int64_t iy = oy * stride - pad + dy;
          if (iy < 0 || iy >= H) continue;
          T* dst = x + (c * H + iy) * W;
          for (int64_t ox = 0; ox < OW; ++ox) {
            const int64_t ix = ox * stride - pad + dx;
            if (ix >= 0 && ix < W) dst[ix] += row[oy * OW + ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: [B,C,H,W], w: [F,C,kh,kw], b: [F]
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
  require(x.value().shape.size() == 4 && w.value().shape.size() == 4 && b.value().shape.size() == 1,
          "conv2d expects x [B,C,H,W], w [F,C,kh,kw], b [F]");
  const int64_t B = x.value().shape[0], C = x.value().shape[1], H = x.value().shape[2], W = x.value().shape[3];
  const int64_t F = w.value().shape[0], kh = w.value().shape[2], kw = w.value().shape[3];
  require(w.value().shape[1] == C && b.value().shape[0] == F, "conv2d channel mismatch");
  const int64_t OH = detail::conv_out_dim(H, kh, stride, pad);
  const int64_t OW = detail::conv_out_dim(W, kw, stride, pad);
  const int64_t K = C * kh * kw, P = OH * OW;

  Tensor<T> out({B, F, OH, OW});
  AlignedVector<T> col(static_cast<size_t>(K) * P);
  {
    ConstMatMap<T> wm(w.value().data.data(), F, K);
    for (int64_t i = 0; i < B; ++i) {
      detail::im2col(x.value().data.data() + i * C * H * W, C, H, W, kh, kw, stride, pad, OH, OW, col.data());
      MatMap<T> om(out.data.data() + i * F * P, F, P);
      om.noalias() = wm * ConstMatMap<T>(col.data(), K, P);
      for (int64_t f = 0; f < F; ++f) om.row(f).array() += b.value().data[f];
    }
  }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  int64_t s = stride, p = pad;
  return make_op<T>(std::move(out), {x, w, b}, [=](VarNode<T>& n) {
    AlignedVector<T> col(static_cast<size_t>(K) * P);
    Tensor<T> dw, dx, db;
    if (wn->requires_grad) dw = Tensor<T>::zeros(wn->value.shape);
    if (xn->requires_grad) dx = Tensor<T>::zeros(xn->value.shape);
    if (bn->requires_grad) db = Tensor<T>::zeros(bn->value.shape);
    AlignedVector<T> dcol(xn->requires_grad ? static_cast<size_t>(K) * P : 0);
    ConstMatMap<T> wm(wn->value.data.data(), F, K);
    for (int64_t i = 0; i < B; ++i) {
      ConstMatMap<T> gm(n.grad.data.data() + i * F * P, F, P);
      if (wn->requires_grad) {
        detail::im2col(xn->value.data.data() + i * C * H * W, C, H, W, kh, kw, s, p, OH, OW, col.data());
        MatMap<T>(dw.data.data(), F, K).noalias() += gm * ConstMatMap<T>(col.data(), K, P).transpose();
      }
      if (bn->requires_grad)
        for (int64_t f = 0; f < F; ++f) db.data[f] += gm.row(f).sum();
      if (xn->requires_grad) {
        MatMap<T>(dcol.data(), K, P).noalias() = wm.transpose() * gm;
        detail::col2im(dcol.data(), C, H, W, kh, kw, s, p, OH, OW, dx.data.data() + i * C * H * W);
      }
    }
    if (wn->requires_grad) accumulate_grad(*wn, dw);
    if (bn->requires_grad) accumulate_grad(*bn, db);
    if (xn->requires_grad) accumulate_grad(*xn, dx);
  });
}

// ---- 3d convolution ----

namespace detail {

// col: C*kt*kh*kw rows by OT*OH*OW columns, one sample [C,T,H,W].
template <typename T>
void vol2col(const T* x, int64_t C, int64_t Tn, int64_t H, int64_t W, const std::array<int, 3>& k,
             const std::array<int, 3>& stride, const std::array<int, 3>& pad, int64_t OT, int64_t OH, int64_t OW,
             T* col) {
  const int64_t P = OT * OH * OW;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t dt = 0; dt < k[0]; ++dt) {
      for (int64_t dy = 0; dy < k[1]; ++dy) {
        for (int64_t dx = 0; dx < k[2]; ++dx) {
          T* row = col + (((c * k[0] + dt) * k[1] + dy) * k[2] + dx) * P;
          for (int64_t ot = 0; ot < OT; ++ot) {
            const int64_t it = ot * stride[0] - pad[0] + dt;
            if (it < 0 || it >= Tn) {
              std::fill_n(row + ot * OH * OW, OH * OW, T(0));
              continue;
            }
            for (int64_t oy = 0; oy < OH; ++oy) {
              const int64_t iy = oy * stride[1] - pad[1] + dy;
              T* out_row = row + (ot * OH + oy) * OW;
              if (iy < 0 || iy >= H) {
                std::fill_n(out_row, OW, T(0));
                continue;
              }
              const T* src = x + ((c * Tn + it) * H + iy) * W;
              for (int64_t ox = 0; ox < OW; ++ox) {
                const int64_t ix = ox * stride[2] - pad[2] + dx;
                out_row[ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2vol(const T* col, int64_t C, int64_t Tn, int64_t H, int64_t W, const std::array<int, 3>& k,
             const std::array<int, 3>& stride, const std::array<int, 3>& pad, int64_t OT, int64_t OH, int64_t OW,
             T* x) {
  std::fill_n(x, C * Tn * H * W, T(0));
  const int64_t P = OT * OH * OW;
  for (int64_t c = 0; c < C; ++c) {
    for (int64_t dt = 0; dt < k[0]; ++dt) {
      for (int64_t dy = 0; dy < k[1]; ++dy) {
        for (int64_t dx = 0; dx < k[2]; ++dx) {
          const T* row = col + (((c * k[0] + dt) * k[1] + dy) * k[2] + dx) * P;
          for (int64_t ot = 0; ot < OT; ++ot) {
            const int64_t it = ot * stride[0] - pad[0] + dt;
            if (it < 0 || it >= Tn) continue;
            for (int64_t oy = 0; oy < OH; ++oy) {
              const int64_t iy = oy * stride[1] - pad[1] + dy;
              if (iy < 0 || iy >= H) continue;
              T* dst = x + ((c * Tn + it) * H + iy) * W;
              const T* src_row = row + (ot * OH + oy) * OW;
              for (int64_t ox = 0; ox < OW; ++ox) {
                const int64_t ix = ox * stride[2] - pad[2] + dx;
                if (ix >= 0 && ix < W) dst[ix] += src_row[ox];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: [B,C,T,H,W], w: [F,C,kt,kh,kw], b: [F]
template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& b, std::array<int, 3> stride, std::array<int, 3> pad) {
  require(x.value().shape.size() == 5 && w.value().shape.size() == 5 && b.value().shape.size() == 1,
          "conv3d expects x [B,C,T,H,W], w [F,C,kt,kh,kw], b [F]");
  const int64_t B = x.value().shape[0], C = x.value().shape[1], Tn = x.value().shape[2], H = x.value().shape[3],
                W = x.value().shape[4];
  const int64_t F = w.value().shape[0];
  const std::array<int, 3> k = {static_cast<int>(w.value().shape[2]), static_cast<int>(w.value().shape[3]),
                                static_cast<int>(w.value().shape[4])};
  require(w.value().shape[1] == C && b.value().shape[0] == F, "conv3d channel mismatch");
  const int64_t OT = detail::conv_out_dim(Tn, k[0], stride[0], pad[0]);
  const int64_t OH = detail::conv_out_dim(H, k[1], stride[1], pad[1]);
  const int64_t OW = detail::conv_out_dim(W, k[2], stride[2], pad[2]);
  const int64_t K = C * k[0] * k[1] * k[2], P = OT * OH * OW;

  Tensor<T> out({B, F, OT, OH, OW});
  AlignedVector<T> col(static_cast<size_t>(K) * P);
  {
    ConstMatMap<T> wm(w.value().data.data(), F, K);
    for (int64_t i = 0; i < B; ++i) {
      detail::vol2col(x.value().data.data() + i * C * Tn * H * W, C, Tn, H, W, k, stride, pad, OT, OH, OW,
                      col.data());
      MatMap<T> om(out.data.data() + i * F * P, F, P);
      om.noalias() = wm * ConstMatMap<T>(col.data(), K, P);
      for (int64_t f = 0; f < F; ++f) om.row(f).array() += b.value().data[f];
    }
  }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return make_op<T>(std::move(out), {x, w, b}, [=](VarNode<T>& n) {
    AlignedVector<T> col(static_cast<size_t>(K) * P);
    Tensor<T> dw, dx, db;
    if (wn->requires_grad) dw = Tensor<T>::zeros(wn->value.shape);
    if (xn->requires_grad) dx = Tensor<T>::zeros(xn->value.shape);
    if (bn->requires_grad) db = Tensor<T>::zeros(bn->value.shape);
    AlignedVector<T> dcol(xn->requires_grad ? static_cast<size_t>(K) * P : 0);
    ConstMatMap<T> wm(wn->value.data.data(), F, K);
    for (int64_t i = 0; i < B; ++i) {
      ConstMatMap<T> gm(n.grad.data.data() + i * F * P, F, P);
      if (wn->requires_grad) {
        detail::vol2col(xn->value.data.data() + i * C * Tn * H * W, C, Tn, H, W, k, stride, pad, OT, OH, OW,
                        col.data());
        MatMap<T>(dw.data.data(), F, K).noalias() += gm * ConstMatMap<T>(col.data(), K, P).transpose();
      }
      if (bn->requires_grad)
        for (int64_t f = 0; f < F; ++f) db.data[f] += gm.row(f).sum();
      if (xn->requires_grad) {
        MatMap<T>(dcol.data(), K, P).noalias() = wm.transpose() * gm;
        detail::col2vol(dcol.data(), C, Tn, H, W, k, stride, pad, OT, OH, OW, dx.data.data() + i * C * Tn * H * W);
      }
    }
    if (wn->requires_grad) accumulate_grad(*wn, dw);
    if (bn->requires_grad) accumulate_grad(*bn, db);
    if (xn->requires_grad) accumulate_grad(*xn, dx);
  });
}

// ---- pooling ----

// x: [B,C,H,W]. Padded positions count as -inf, so they are never selected.
template <typename T>
Var<T> maxpool2d(const Var<T>& x, int k, int stride, int pad) {
  require(x.value().shape.size() == 4, "maxpool2d expects [B,C,H,W]");
  const int64_t B = x.value().shape[0], C = x.value().shape[1], H = x.value().shape[2], W = x.value().shape[3];
  const int64_t OH = detail::conv_out_dim(H, k, stride, pad);
  const int64_t OW = detail::conv_out_dim(W, k, stride, pad);
  Tensor<T> out({B, C, OH, OW});
  // Flat index into the sample's [C,H,W] block of the winning input element.
  auto argmax = std::make_shared<std::vector<int64_t>>(out.data.size());
  int64_t o = 0;
  for (int64_t i = 0; i < B; ++i) {
    const T* xs = x.value().data.data() + i * C * H * W;
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t oy = 0; oy < OH; ++oy) {
        for (int64_t ox = 0; ox < OW; ++ox, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          int64_t best_idx = -1;
          for (int64_t dy = 0; dy < k; ++dy) {
            const int64_t iy = oy * stride - pad + dy;
            if (iy < 0 || iy >= H) continue;
            for (int64_t dx = 0; dx < k; ++dx) {
              const int64_t ix = ox * stride - pad + dx;
              if (ix < 0 || ix >= W) continue;
              const T v = xs[(c * H + iy) * W + ix];
              if (v > best) {
                best = v;
                best_idx = (c * H + iy) * W + ix;
              }
            }
          }
          require(best_idx >= 0, "maxpool2d window fully outside input");
          out.data[o] = best;
          (*argmax)[o] = best_idx;
        }
      }
    }
  }
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, argmax, B, C, H, W](VarNode<T>& n) {
    if (!xn->requires_grad) return;
    Tensor<T> dx = Tensor<T>::zeros(xn->value.shape);
    const int64_t per_sample = n.grad.data.size() / B;
    for (int64_t i = 0; i < B; ++i) {
      T* dxs = dx.data.data() + i * C * H * W;
      for (int64_t j = 0; j < per_sample; ++j) {
        const int64_t o = i * per_sample + j;
        dxs[(*argmax)[o]] += n.grad.data[o];
      }
    }
    accumulate_grad(*xn, dx);
  });
}

// x: [B,C,T,H,W]
template <typename T>
Var<T> maxpool3d(const Var<T>& x, std::array<int, 3> k, std::array<int, 3> stride, std::array<int, 3> pad) {
  require(x.value().shape.size() == 5, "maxpool3d expects [B,C,T,H,W]");
  const int64_t B = x.value().shape[0], C = x.value().shape[1], Tn = x.value().shape[2], H = x.value().shape[3],
                W = x.value().shape[4];
  const int64_t OT = detail::conv_out_dim(Tn, k[0], stride[0], pad[0]);
  const int64_t OH = detail::conv_out_dim(H, k[1], stride[1], pad[1]);
  const int64_t OW = detail::conv_out_dim(W, k[2], stride[2], pad[2]);
  Tensor<T> out({B, C, OT, OH, OW});
  auto argmax = std::make_shared<std::vector<int64_t>>(out.data.size());
  int64_t o = 0;
  for (int64_t i = 0; i < B; ++i) {
    const T* xs = x.value().data.data() + i * C * Tn * H * W;
    for (int64_t c = 0; c < C; ++c) {
      for (int64_t ot = 0; ot < OT; ++ot) {
        for (int64_t oy = 0; oy < OH; ++oy) {
          for (int64_t ox = 0; ox < OW; ++ox, ++o) {
            T best = -std::numeric_limits<T>::infinity();
            int64_t best_idx = -1;
            for (int64_t dt = 0; dt < k[0]; ++dt) {
              const int64_t it = ot * stride[0] - pad[0] + dt;
              if (it < 0 || it >= Tn) continue;
              for (int64_t dy = 0; dy < k[1]; ++dy) {
                const int64_t iy = oy * stride[1] - pad[1] + dy;
                if (iy < 0 || iy >= H) continue;
                for (int64_t dx = 0; dx < k[2]; ++dx) {
                  const int64_t ix = ox * stride[2] - pad[2] + dx;
                  if (ix < 0 || ix >= W) continue;
                  const T v = xs[((c * Tn + it) * H + iy) * W + ix];
                  if (v > best) {
                    best = v;
                    best_idx = ((c * Tn + it) * H + iy) * W + ix;
                  }
                }
              }
            }
            require(best_idx >= 0, "maxpool3d window fully outside input");
            out.data[o] = best;
            (*argmax)[o] = best_idx;
          }
        }
      }
    }
  }
  auto xn = x.node();
  const int64_t sample = C * Tn * H * W;
  return make_op<T>(std::move(out), {x}, [xn, argmax, B, sample](VarNode<T>& n) {
    if (!xn->requires_grad) return;
    Tensor<T> dx = Tensor<T>::zeros(xn->value.shape);
    const int64_t per_sample = n.grad.data.size() / B;
    for (int64_t i = 0; i < B; ++i) {
      T* dxs = dx.data.data() + i * sample;
      for (int64_t j = 0; j < per_sample; ++j) {
        const int64_t o = i * per_sample + j;
        dxs[(*argmax)[o]] += n.grad.data[o];
      }
    }
    accumulate_grad(*xn, dx);
  });
}

// Averages every dimension after the channel: [B,C,...] -> [B,C].
template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  require(x.value().shape.size() >= 3, "global_avg_pool expects rank >= 3");
  const int64_t B = x.value().shape[0], C = x.value().shape[1];
  int64_t inner = 1;
  for (size_t i = 2; i < x.value().shape.size(); ++i) inner *= x.value().shape[i];
  Tensor<T> out({B, C});
  for (int64_t i = 0; i < B; ++i) {
    for (int64_t c = 0; c < C; ++c) {
      const T* src = x.value().data.data() + (i * C + c) * inner;
      T sum = 0;
      for (int64_t j = 0; j < inner; ++j) sum += src[j];
      out.data[i * C + c] = sum / static_cast<T>(inner);
    }
  }
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, B, C, inner](VarNode<T>& n) {
    if (!xn->requires_grad) return;
    Tensor<T> dx(xn->value.shape);
    for (int64_t i = 0; i < B; ++i) {
      for (int64_t c = 0; c < C; ++c) {
        const T g = n.grad.data[i * C + c] / static_cast<T>(inner);
        T* dst = dx.data.data() + (i * C + c) * inner;
        std::fill_n(dst, inner, g);
      }
    }
    accumulate_grad(*xn, dx);
  });
}

// [B,T,K] -> [B,K], mean over the middle dimension.
template <typename T>
Var<T> mean_frames(const Var<T>& x) {
  require(x.value().shape.size() == 3, "mean_frames expects [B,T,K]");
  const int64_t B = x.value().shape[0], Tn = x.value().shape[1], K = x.value().shape[2];
  Tensor<T> out = Tensor<T>::zeros({B, K});
  for (int64_t i = 0; i < B; ++i)
    for (int64_t t = 0; t < Tn; ++t)
      for (int64_t j = 0; j < K; ++j) out.data[i * K + j] += x.value().data[(i * Tn + t) * K + j];
  for (auto& v : out.data) v /= static_cast<T>(Tn);
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, B, Tn, K](VarNode<T>& n) {
    if (!xn->requires_grad) return;
    Tensor<T> dx(xn->value.shape);
    for (int64_t i = 0; i < B; ++i)
      for (int64_t t = 0; t < Tn; ++t)
        for (int64_t j = 0; j < K; ++j) dx.data[(i * Tn + t) * K + j] = n.grad.data[i * K + j] / static_cast<T>(Tn);
    accumulate_grad(*xn, dx);
  });
}

// Reduces everything to a single-element tensor.
template <typename T>
Var<T> sum_all(const Var<T>& x) {
  Tensor<T> out({1});
  T s = 0;
  for (const T v : x.value().data) s += v;
  out.data[0] = s;
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn](VarNode<T>& n) {
    if (!xn->requires_grad) return;
    Tensor<T> dx = Tensor<T>::full(xn->value.shape, n.grad.data[0]);
    accumulate_grad(*xn, dx);
  });
}

// ---- batch normalization ----

// Normalizes over everything except dimension 1. In training mode the batch
// statistics are used and the running buffers are updated in place (running
// variance keeps the unbiased estimate); in eval mode the running buffers
// are used and are left untouched.
template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, Tensor<T>& running_mean,
                 Tensor<T>& running_var, bool training, T momentum = T(0.1), T eps = T(1e-5)) {
  require(x.value().shape.size() >= 2, "batchnorm expects rank >= 2");
  const int64_t B = x.value().shape[0], C = x.value().shape[1];
  int64_t inner = 1;
  for (size_t i = 2; i < x.value().shape.size(); ++i) inner *= x.value().shape[i];
  require(gamma.value().numel() == C && beta.value().numel() == C && running_mean.numel() == C &&
              running_var.numel() == C,
          "batchnorm parameter size mismatch");
  const int64_t count = B * inner;

  auto mean = std::make_shared<std::vector<T>>(C, T(0));
  auto inv_std = std::make_shared<std::vector<T>>(C, T(0));
  if (training) {
    for (int64_t c = 0; c < C; ++c) {
      T sum = 0;
      for (int64_t i = 0; i < B; ++i) {
        const T* src = x.value().data.data() + (i * C + c) * inner;
        for (int64_t j = 0; j < inner; ++j) sum += src[j];
      }
      const T mu = sum / static_cast<T>(count);
      T var_sum = 0;
      for (int64_t i = 0; i < B; ++i) {
        const T* src = x.value().data.data() + (i * C + c) * inner;
        for (int64_t j = 0; j < inner; ++j) {
          const T d = src[j] - mu;
          var_sum += d * d;
        }
      }
      const T var = var_sum / static_cast<T>(count);
      (*mean)[c] = mu;
      (*inv_std)[c] = T(1) / std::sqrt(var + eps);
      running_mean.data[c] = (T(1) - momentum) * running_mean.data[c] + momentum * mu;
      const T unbiased = count > 1 ? var_sum / static_cast<T>(count - 1) : var;
      running_var.data[c] = (T(1) - momentum) * running_var.data[c] + momentum * unbiased;
    }
  } else {
    for (int64_t c = 0; c < C; ++c) {
      (*mean)[c] = running_mean.data[c];
      (*inv_std)[c] = T(1) / std::sqrt(running_var.data[c] + eps);
    }
  }

  Tensor<T> out(x.value().shape);
  for (int64_t i = 0; i < B; ++i) {
    for (int64_t c = 0; c < C; ++c) {
      const T* src = x.value().data.data() + (i * C + c) * inner;
      T* dst = out.data.data() + (i * C + c) * inner;
      const T g = gamma.value().data[c], bt = beta.value().data[c], mu = (*mean)[c], is = (*inv_std)[c];
      for (int64_t j = 0; j < inner; ++j) dst[j] = (src[j] - mu) * is * g + bt;
    }
  }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_op<T>(std::move(out), {x, gamma, beta}, [xn, gn, bn, mean, inv_std, training, B, C,
                                                       inner](VarNode<T>& n) {
    const int64_t count = B * inner;
    // dgamma and dbeta are plain reductions over normalized activations.
    std::vector<T> dgamma(C, T(0)), dbeta(C, T(0));
    std::vector<T> sum_g(C, T(0)), sum_gx(C, T(0));  // per-channel sums of dy and dy*xhat
    for (int64_t i = 0; i < B; ++i) {
      for (int64_t c = 0; c < C; ++c) {
        const T* xp = xn->value.data.data() + (i * C + c) * inner;
        const T* gp = n.grad.data.data() + (i * C + c) * inner;
        const T mu = (*mean)[c], is = (*inv_std)[c];
        for (int64_t j = 0; j < inner; ++j) {
          const T xhat = (xp[j] - mu) * is;
          sum_g[c] += gp[j];
          sum_gx[c] += gp[j] * xhat;
        }
      }
    }
    for (int64_t c = 0; c < C; ++c) {
      dgamma[c] = sum_gx[c];
      dbeta[c] = sum_g[c];
    }
    if (gn->requires_grad) {
      Tensor<T> dg({C});
      dg.data.assign(dgamma.begin(), dgamma.end());
      accumulate_grad(*gn, dg);
    }
    if (bn->requires_grad) {
      Tensor<T> db({C});
      db.data.assign(dbeta.begin(), dbeta.end());
      accumulate_grad(*bn, db);
    }
    if (xn->requires_grad) {
      Tensor<T> dx(xn->value.shape);
      for (int64_t i = 0; i < B; ++i) {
        for (int64_t c = 0; c < C; ++c) {
          const T* xp = xn->value.data.data() + (i * C + c) * inner;
          const T* gp = n.grad.data.data() + (i * C + c) * inner;
          T* dp = dx.data.data() + (i * C + c) * inner;
          const T g = gn->value.data[c], mu = (*mean)[c], is = (*inv_std)[c];
          if (training) {
            // Batch statistics depend on x, so the gradient carries the
            // mean/variance correction terms.
            const T m = static_cast<T>(count);
            for (int64_t j = 0; j < inner; ++j) {
              const T xhat = (xp[j] - mu) * is;
              dp[j] = g * is * (gp[j] - sum_g[c] / m - xhat * sum_gx[c] / m);
            }
          } else {
            for (int64_t j = 0; j < inner; ++j) dp[j] = g * is * gp[j];
          }
        }
      }
      accumulate_grad(*xn, dx);
    }
  });
}

// ---- softmax and losses ----

// Row-wise stable softmax over [B,K].
template <typename T>
Var<T> softmax(const Var<T>& x) {
  require(x.value().shape.size() == 2, "softmax expects [B,K]");
  const int64_t B = x.value().shape[0], K = x.value().shape[1];
  Tensor<T> out(x.value().shape);
  for (int64_t i = 0; i < B; ++i) {
    const T* src = x.value().data.data() + i * K;
    T* dst = out.data.data() + i * K;
    T mx = src[0];
    for (int64_t j = 1; j < K; ++j) mx = std::max(mx, src[j]);
    T sum = 0;
    for (int64_t j = 0; j < K; ++j) {
      dst[j] = std::exp(src[j] - mx);
      sum += dst[j];
    }
    for (int64_t j = 0; j < K; ++j) dst[j] /= sum;
  }
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn, B, K](VarNode<T>& n) {
    if (!xn->requires_grad) return;
    Tensor<T> dx(xn->value.shape);
    for (int64_t i = 0; i < B; ++i) {
      const T* y = n.value.data.data() + i * K;
      const T* g = n.grad.data.data() + i * K;
      T dot = 0;
      for (int64_t j = 0; j < K; ++j) dot += g[j] * y[j];
      T* d = dx.data.data() + i * K;
      for (int64_t j = 0; j < K; ++j) d[j] = (g[j] - dot) * y[j];
    }
    accumulate_grad(*xn, dx);
  });
}

// Natural log, elementwise. Inputs must be strictly positive (probabilities
// coming out of softmax are).
template <typename T>
Var<T> log_op(const Var<T>& x) {
  Tensor<T> out(x.value().shape);
  for (size_t i = 0; i < out.data.size(); ++i) {
    require(x.value().data[i] > T(0), "log of a non-positive value");
    out.data[i] = std::log(x.value().data[i]);
  }
  auto xn = x.node();
  return make_op<T>(std::move(out), {x}, [xn](VarNode<T>& n) {
    if (!xn->requires_grad) return;
    Tensor<T> dx(n.value.shape);
    for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] = n.grad.data[i] / xn->value.data[i];
    accumulate_grad(*xn, dx);
  });
}

// Mean cross entropy from logits [B,K] against integer labels. Optional
// per-class weights follow the weighted-mean convention: the per-sample
// losses are scaled by the label's weight and divided by the sum of the
// participating weights.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& labels, const std::vector<T>& class_weights = {}) {
  require(logits.value().shape.size() == 2, "cross_entropy expects logits [B,K]");
  const int64_t B = logits.value().shape[0], K = logits.value().shape[1];
  require(static_cast<int64_t>(labels.size()) == B, "cross_entropy label count mismatch");
  require(class_weights.empty() || static_cast<int64_t>(class_weights.size()) == K,
          "cross_entropy weight count mismatch");
  for (int y : labels) require(y >= 0 && y < K, "cross_entropy label out of range");

  // log-softmax, kept for the backward pass
  auto logp = std::make_shared<std::vector<T>>(B * K);
  for (int64_t i = 0; i < B; ++i) {
    const T* src = logits.value().data.data() + i * K;
    T mx = src[0];
    for (int64_t j = 1; j < K; ++j) mx = std::max(mx, src[j]);
    T sum = 0;
    for (int64_t j = 0; j < K; ++j) sum += std::exp(src[j] - mx);
    const T lse = mx + std::log(sum);
    for (int64_t j = 0; j < K; ++j) (*logp)[i * K + j] = src[j] - lse;
  }
  T weight_sum = 0, loss = 0;
  for (int64_t i = 0; i < B; ++i) {
    const T w = class_weights.empty() ? T(1) : class_weights[labels[i]];
    weight_sum += w;
    loss -= w * (*logp)[i * K + labels[i]];
  }
  require(weight_sum > T(0), "cross_entropy weights sum to zero");
  Tensor<T> out({1});
  out.data[0] = loss / weight_sum;

  auto ln = logits.node();
  auto labels_copy = std::make_shared<std::vector<int>>(labels);
  auto weights_copy = std::make_shared<std::vector<T>>(class_weights);
  return make_op<T>(std::move(out), {logits}, [ln, logp, labels_copy, weights_copy, B, K, weight_sum](VarNode<T>& n) {
    if (!ln->requires_grad) return;
    const T upstream = n.grad.data[0];
    Tensor<T> dx({B, K});
    for (int64_t i = 0; i < B; ++i) {
      const T w = weights_copy->empty() ? T(1) : (*weights_copy)[(*labels_copy)[i]];
      const T scale = upstream * w / weight_sum;
      for (int64_t j = 0; j < K; ++j) {
        const T p = std::exp((*logp)[i * K + j]);
        dx.data[i * K + j] = scale * (p - (j == (*labels_copy)[i] ? T(1) : T(0)));
      }
    }
    accumulate_grad(*ln, dx);
  });
}

}  // namespace maneuver
