#pragma once
// Pixel-level color transformation: per-pixel 1x1 channel mixing with a
// per-stream first conv (+BN+ReLU) and a weight-shared second conv back to
// 3 channels. The shared conv sees both streams' activations in one training
// step, so its gradient accumulates cross-stream.

#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "cclab/image.hpp"
#include "cclab/init.hpp"
#include "cclab/ops.hpp"
#include "cclab/tensor.hpp"

namespace cclab {

template <typename T>
struct PctParams {
  int hidden = 8;
  // In the cloth-change regime only the RGB path exists.
  bool ir_enabled = true;

  ParamTensor<T> c_in_rgb_w, c_in_rgb_b;
  ParamTensor<T> c_in_ir_w, c_in_ir_b;
  BNState<T> bn_rgb, bn_ir;
  ParamTensor<T> c_x_w, c_x_b;  // one set, referenced by both streams

  std::vector<ParamTensor<T>*> params() {
    std::vector<ParamTensor<T>*> out = {&c_in_rgb_w, &c_in_rgb_b, &bn_rgb.gamma, &bn_rgb.beta};
    if (ir_enabled) {
      out.push_back(&c_in_ir_w);
      out.push_back(&c_in_ir_b);
      out.push_back(&bn_ir.gamma);
      out.push_back(&bn_ir.beta);
    }
    out.push_back(&c_x_w);
    out.push_back(&c_x_b);
    return out;
  }

  void set_mode(BNMode m) {
    bn_rgb.mode = m;
    bn_ir.mode = m;
  }
  void set_update_running(bool v) {
    bn_rgb.update_running = v;
    bn_ir.update_running = v;
  }
  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }
};

template <typename T>
PctParams<T> pct_init(int hidden, std::mt19937& rng, bool ir_enabled = true) {
  if (hidden < 1) throw std::invalid_argument("pct_init: hidden width must be >= 1");
  PctParams<T> p;
  p.hidden = hidden;
  p.ir_enabled = ir_enabled;
  p.c_in_rgb_w = ParamTensor<T>("pct.c_in_rgb.w", {hidden, 3, 1, 1});
  p.c_in_rgb_b = ParamTensor<T>("pct.c_in_rgb.b", {hidden}, /*decay=*/false);
  p.c_in_ir_w = ParamTensor<T>("pct.c_in_ir.w", {hidden, 3, 1, 1});
  p.c_in_ir_b = ParamTensor<T>("pct.c_in_ir.b", {hidden}, /*decay=*/false);
  p.bn_rgb = BNState<T>("pct.bn_rgb", hidden);
  p.bn_ir = BNState<T>("pct.bn_ir", hidden);
  p.c_x_w = ParamTensor<T>("pct.c_x.w", {3, hidden, 1, 1});
  p.c_x_b = ParamTensor<T>("pct.c_x.b", {3}, /*decay=*/false);
  init_fanin_uniform(p.c_in_rgb_w, rng);
  init_fanin_uniform(p.c_in_ir_w, rng);
  init_fanin_uniform(p.c_x_w, rng);
  return p;
}

template <typename T>
struct PctCache {
  int n_rgb = 0, n_ir = 0;
  Tensor<T> x_rgb, x_ir;      // conv inputs per stream
  Tensor<T> act_rgb, act_ir;  // relu outputs per stream
  Tensor<T> act_all;          // concatenated input to the shared conv
};

// x_ir may be empty. Output rows: RGB rows first, then IR rows.
template <typename T>
Tensor<T> pct_forward_mixed(const Tensor<T>& x_rgb, const Tensor<T>& x_ir, PctParams<T>& p,
                            PctCache<T>& cache) {
  const bool has_ir = x_ir.numel() > 0;
  if (has_ir && !p.ir_enabled)
    throw std::invalid_argument(
        "pct: IR-stream input given but the IR path is disabled (cloth-change regime)");
  if (x_rgb.numel() == 0 && !has_ir)
    throw std::invalid_argument("pct: empty batch");
  cache.n_rgb = x_rgb.numel() ? x_rgb.dim(0) : 0;
  cache.n_ir = has_ir ? x_ir.dim(0) : 0;
  cache.x_rgb = x_rgb;
  cache.x_ir = x_ir;

  if (cache.n_rgb > 0) {
    auto h = conv2d(x_rgb, p.c_in_rgb_w.value, p.c_in_rgb_b.value, 1, 0);
    cache.act_rgb = relu(batch_norm(h, p.bn_rgb));
  } else {
    cache.act_rgb = Tensor<T>();
  }
  if (cache.n_ir > 0) {
    auto h = conv2d(x_ir, p.c_in_ir_w.value, p.c_in_ir_b.value, 1, 0);
    cache.act_ir = relu(batch_norm(h, p.bn_ir));
  } else {
    cache.act_ir = Tensor<T>();
  }
  cache.act_all = concat_rows(cache.act_rgb, cache.act_ir);
  return conv2d(cache.act_all, p.c_x_w.value, p.c_x_b.value, 1, 0);
}

// Accumulates parameter gradients; writes input gradients when requested.
template <typename T>
void pct_backward_mixed(const Tensor<T>& dy, PctParams<T>& p, PctCache<T>& cache,
                        std::type_identity_t<Tensor<T>*> dx_rgb,
                        std::type_identity_t<Tensor<T>*> dx_ir) {
  Tensor<T> dact =
      conv2d_backward(cache.act_all, p.c_x_w.value, dy, 1, 0, p.c_x_w.grad, p.c_x_b.grad);
  if (cache.n_rgb > 0) {
    auto d = slice_rows(dact, 0, cache.n_rgb);
    auto dbn = relu_backward(d, cache.act_rgb);
    auto dh = batch_norm_backward(dbn, p.bn_rgb);
    auto dx = conv2d_backward(cache.x_rgb, p.c_in_rgb_w.value, dh, 1, 0, p.c_in_rgb_w.grad,
                              p.c_in_rgb_b.grad);
    if (dx_rgb) *dx_rgb = std::move(dx);
  }
  if (cache.n_ir > 0) {
    auto d = slice_rows(dact, cache.n_rgb, cache.n_ir);
    auto dbn = relu_backward(d, cache.act_ir);
    auto dh = batch_norm_backward(dbn, p.bn_ir);
    auto dx = conv2d_backward(cache.x_ir, p.c_in_ir_w.value, dh, 1, 0, p.c_in_ir_w.grad,
                              p.c_in_ir_b.grad);
    if (dx_ir) *dx_ir = std::move(dx);
  }
}

// Single-stream convenience wrapper (inference, visualization).
template <typename T>
Tensor<T> pct_forward(const Tensor<T>& x, Stream stream, PctParams<T>& p) {
  if (stream == Stream::IR && !p.ir_enabled)
    throw std::invalid_argument(
        "pct: IR stream requested but the IR path is disabled (cloth-change regime)");
  PctCache<T> cache;
  if (stream == Stream::RGB) return pct_forward_mixed(x, Tensor<T>(), p, cache);
  return pct_forward_mixed(Tensor<T>(), x, p, cache);
}

// Per-image min-max rescale to [0,1]; visualization only (the backbone sees
// the raw transform output). Constant images map to 0.5.
template <typename T>
Tensor<T> minmax_rescale(const Tensor<T>& img) {
  T lo = img[0], hi = img[0];
  for (std::size_t i = 1; i < img.numel(); ++i) {
    lo = std::min(lo, img[i]);
    hi = std::max(hi, img[i]);
  }
  Tensor<T> out(img.shape);
  if (hi - lo < T(1e-12)) {
    out.fill(T(0.5));
    return out;
  }
  for (std::size_t i = 0; i < img.numel(); ++i) out[i] = (img[i] - lo) / (hi - lo);
  return out;
}

}  // namespace cclab
