#pragma once
// Two-stream embedding network: a per-stream first conv block, shared deeper
// blocks (optionally with one attention block), global average pooling, an
// embedding projection, and a BN-then-classifier head. Desk-scale widths
// 16/32/64/64 on 3x64x32 inputs, 64-d embeddings.

#include <array>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "cclab/image.hpp"
#include "cclab/init.hpp"
#include "cclab/ops.hpp"
#include "cclab/tensor.hpp"

namespace cclab {

// ------------------------------------------------------------ conv block --

template <typename T>
struct ConvBlock {
  ParamTensor<T> w, b;
  BNState<T> bn;
  int stride = 1;
};

template <typename T>
ConvBlock<T> make_conv_block(const std::string& name, int c_in, int c_out, int stride,
                             std::mt19937& rng) {
  ConvBlock<T> blk;
  blk.w = ParamTensor<T>(name + ".w", {c_out, c_in, 3, 3});
  blk.b = ParamTensor<T>(name + ".b", {c_out}, /*decay=*/false);
  blk.bn = BNState<T>(name + ".bn", c_out);
  blk.stride = stride;
  init_fanin_uniform(blk.w, rng);
  return blk;
}

template <typename T>
struct ConvBlockCache {
  Tensor<T> x, y;  // conv input, relu output
};

template <typename T>
Tensor<T> conv_block_forward(const Tensor<T>& x, ConvBlock<T>& blk, ConvBlockCache<T>& c) {
  c.x = x;
  c.y = relu(batch_norm(conv2d(x, blk.w.value, blk.b.value, blk.stride, 1), blk.bn));
  return c.y;
}

template <typename T>
Tensor<T> conv_block_backward(const Tensor<T>& dy, ConvBlock<T>& blk,
                              const ConvBlockCache<T>& c) {
  auto dbn = relu_backward(dy, c.y);
  auto dconv = batch_norm_backward(dbn, blk.bn);
  return conv2d_backward(c.x, blk.w.value, dconv, blk.stride, 1, blk.w.grad, blk.b.grad);
}

// --------------------------------------------------------- attention block --

// Residual self-attention over all spatial positions with a channel
// bottleneck: y = x + W_z * softmax(theta(x)^T phi(x)) applied to g(x).
// Projections are bias-free (a phi bias shifts every row logit by the same
// constant, which the row softmax cancels; it would be an inert parameter).
// W_z starts at zero, so the block is the identity at initialization.
template <typename T>
struct NonLocalParams {
  int channels = 0;
  ParamTensor<T> theta_w, phi_w, g_w, wz_w;
};

template <typename T>
NonLocalParams<T> make_nonlocal(const std::string& name, int channels, std::mt19937& rng) {
  if (channels % 2 != 0)
    throw std::invalid_argument("nonlocal_block: channel count must be even");
  const int half = channels / 2;
  NonLocalParams<T> p;
  p.channels = channels;
  p.theta_w = ParamTensor<T>(name + ".theta.w", {half, channels, 1, 1});
  p.phi_w = ParamTensor<T>(name + ".phi.w", {half, channels, 1, 1});
  p.g_w = ParamTensor<T>(name + ".g.w", {half, channels, 1, 1});
  p.wz_w = ParamTensor<T>(name + ".wz.w", {channels, half, 1, 1});
  init_fanin_uniform(p.theta_w, rng);
  init_fanin_uniform(p.phi_w, rng);
  init_fanin_uniform(p.g_w, rng);
  // wz stays zero: the residual branch is silent until trained
  return p;
}

template <typename T>
struct NonLocalCache {
  Tensor<T> x, t, ph, g;  // input and the three projections (N x C/2 x H x W)
  Tensor<T> attn;         // N x P x P row-softmax weights
  Tensor<T> z;            // attended values (N x C/2 x H x W), input to wz
};

template <typename T>
Tensor<T> nonlocal_forward(const Tensor<T>& x, NonLocalParams<T>& p, NonLocalCache<T>& c) {
  const int n = x.dim(0), half = p.channels / 2, h = x.dim(2), w = x.dim(3);
  const int pos = h * w;
  c.x = x;
  const Tensor<T> no_bias;
  c.t = conv2d(x, p.theta_w.value, no_bias, 1, 0);
  c.ph = conv2d(x, p.phi_w.value, no_bias, 1, 0);
  c.g = conv2d(x, p.g_w.value, no_bias, 1, 0);
  c.attn = Tensor<T>({n, pos, pos});
  c.z = Tensor<T>({n, half, h, w});

  const std::size_t plane = static_cast<std::size_t>(pos);
  // position-major copies of theta/phi keep the logit dot products unit-stride
  std::vector<T> t_pm(plane * static_cast<std::size_t>(half)), ph_pm(t_pm.size());
  for (int ni = 0; ni < n; ++ni) {
    const T* tb = c.t.ptr() + static_cast<std::size_t>(ni) * half * plane;
    const T* pb = c.ph.ptr() + static_cast<std::size_t>(ni) * half * plane;
    const T* gb = c.g.ptr() + static_cast<std::size_t>(ni) * half * plane;
    T* ab = c.attn.ptr() + static_cast<std::size_t>(ni) * plane * plane;
    T* zb = c.z.ptr() + static_cast<std::size_t>(ni) * half * plane;
    for (int ch = 0; ch < half; ++ch)
      for (int i = 0; i < pos; ++i) {
        t_pm[static_cast<std::size_t>(i) * half + ch] = tb[ch * plane + i];
        ph_pm[static_cast<std::size_t>(i) * half + ch] = pb[ch * plane + i];
      }
    for (int i = 0; i < pos; ++i) {
      T* arow = ab + static_cast<std::size_t>(i) * plane;
      const T* trow = t_pm.data() + static_cast<std::size_t>(i) * half;
      T mx = -std::numeric_limits<T>::infinity();
      for (int j = 0; j < pos; ++j) {
        const T* prow = ph_pm.data() + static_cast<std::size_t>(j) * half;
        T acc = 0;
        for (int ch = 0; ch < half; ++ch) acc += trow[ch] * prow[ch];
        arow[j] = acc;
        mx = std::max(mx, acc);
      }
      T denom = 0;
      for (int j = 0; j < pos; ++j) {
        arow[j] = std::exp(arow[j] - mx);
        denom += arow[j];
      }
      for (int j = 0; j < pos; ++j) arow[j] /= denom;
    }
    for (int ch = 0; ch < half; ++ch)
      for (int i = 0; i < pos; ++i) {
        T acc = 0;
        const T* arow = ab + static_cast<std::size_t>(i) * plane;
        for (int j = 0; j < pos; ++j) acc += gb[ch * plane + j] * arow[j];
        zb[ch * plane + i] = acc;
      }
  }
  auto res = conv2d(c.z, p.wz_w.value, no_bias, 1, 0);
  Tensor<T> y(x.shape);
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] = x[i] + res[i];
  return y;
}

template <typename T>
Tensor<T> nonlocal_backward(const Tensor<T>& dy, NonLocalParams<T>& p, const NonLocalCache<T>& c) {
  const int n = c.x.dim(0), half = p.channels / 2, h = c.x.dim(2), w = c.x.dim(3);
  const int pos = h * w;
  const std::size_t plane = static_cast<std::size_t>(pos);

  Tensor<T> no_db;
  Tensor<T> dz = conv2d_backward(c.z, p.wz_w.value, dy, 1, 0, p.wz_w.grad, no_db);
  Tensor<T> dt(c.t.shape), dph(c.ph.shape), dg(c.g.shape);
  // position-major scratch keeps every inner loop unit-stride; accumulation
  // orders match the plain layout, so gradients are bit-identical to it
  const std::size_t pm_size = plane * static_cast<std::size_t>(half);
  std::vector<T> t_pm(pm_size), ph_pm(pm_size), g_pm(pm_size), dz_pm(pm_size);
  std::vector<T> dt_pm(pm_size), dph_pm(pm_size), dg_pm(pm_size);
  std::vector<T> dattn(plane), da(plane);
  for (int ni = 0; ni < n; ++ni) {
    const T* tb = c.t.ptr() + static_cast<std::size_t>(ni) * half * plane;
    const T* pb = c.ph.ptr() + static_cast<std::size_t>(ni) * half * plane;
    const T* gb = c.g.ptr() + static_cast<std::size_t>(ni) * half * plane;
    const T* ab = c.attn.ptr() + static_cast<std::size_t>(ni) * plane * plane;
    const T* dzb = dz.ptr() + static_cast<std::size_t>(ni) * half * plane;
    T* dtb = dt.ptr() + static_cast<std::size_t>(ni) * half * plane;
    T* dpb = dph.ptr() + static_cast<std::size_t>(ni) * half * plane;
    T* dgb = dg.ptr() + static_cast<std::size_t>(ni) * half * plane;

    for (int ch = 0; ch < half; ++ch)
      for (int i = 0; i < pos; ++i) {
        const std::size_t r = static_cast<std::size_t>(i) * half + ch;
        t_pm[r] = tb[ch * plane + i];
        ph_pm[r] = pb[ch * plane + i];
        g_pm[r] = gb[ch * plane + i];
        dz_pm[r] = dzb[ch * plane + i];
      }
    std::fill(dph_pm.begin(), dph_pm.end(), T(0));
    std::fill(dg_pm.begin(), dg_pm.end(), T(0));

    // dg[j] += attn[i,j] * dz[i]; then through the row softmax into theta/phi
    for (int i = 0; i < pos; ++i) {
      const T* arow = ab + static_cast<std::size_t>(i) * plane;
      const T* dzrow = dz_pm.data() + static_cast<std::size_t>(i) * half;
      for (int j = 0; j < pos; ++j) {
        T* dgrow = dg_pm.data() + static_cast<std::size_t>(j) * half;
        const T a = arow[j];
        for (int ch = 0; ch < half; ++ch) dgrow[ch] += a * dzrow[ch];
      }
      for (int j = 0; j < pos; ++j) {
        const T* grow = g_pm.data() + static_cast<std::size_t>(j) * half;
        T acc = 0;
        for (int ch = 0; ch < half; ++ch) acc += dzrow[ch] * grow[ch];
        dattn[static_cast<std::size_t>(j)] = acc;
      }
      T inner = 0;
      for (int j = 0; j < pos; ++j) inner += dattn[static_cast<std::size_t>(j)] * arow[j];
      for (int j = 0; j < pos; ++j)
        da[static_cast<std::size_t>(j)] = arow[j] * (dattn[static_cast<std::size_t>(j)] - inner);

      T* dtrow = dt_pm.data() + static_cast<std::size_t>(i) * half;
      std::fill(dtrow, dtrow + half, T(0));
      const T* trow = t_pm.data() + static_cast<std::size_t>(i) * half;
      for (int j = 0; j < pos; ++j) {
        const T v = da[static_cast<std::size_t>(j)];
        const T* prow = ph_pm.data() + static_cast<std::size_t>(j) * half;
        T* dprow = dph_pm.data() + static_cast<std::size_t>(j) * half;
        for (int ch = 0; ch < half; ++ch) {
          dtrow[ch] += v * prow[ch];
          dprow[ch] += v * trow[ch];
        }
      }
    }
    for (int ch = 0; ch < half; ++ch)
      for (int i = 0; i < pos; ++i) {
        const std::size_t r = static_cast<std::size_t>(i) * half + ch;
        dtb[ch * plane + i] = dt_pm[r];
        dpb[ch * plane + i] = dph_pm[r];
        dgb[ch * plane + i] = dg_pm[r];
      }
  }

  Tensor<T> dx = dy;  // residual path
  auto add = [&dx](const Tensor<T>& d) {
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += d[i];
  };
  add(conv2d_backward(c.x, p.theta_w.value, dt, 1, 0, p.theta_w.grad, no_db));
  add(conv2d_backward(c.x, p.phi_w.value, dph, 1, 0, p.phi_w.grad, no_db));
  add(conv2d_backward(c.x, p.g_w.value, dg, 1, 0, p.g_w.grad, no_db));
  return dx;
}

// ---------------------------------------------------------------- network --

template <typename T>
struct BackboneParams {
  bool ir_enabled = true;
  bool use_nonlocal = false;
  int n_classes = 0;
  int d_emb = 64;

  ConvBlock<T> shallow_rgb, shallow_ir;   // same shapes, independent values
  std::array<ConvBlock<T>, 3> shared;     // one parameter set for both streams
  NonLocalParams<T> nl;                   // after shared[0] when enabled
  ParamTensor<T> embed_w, embed_b;
  BNState<T> bnneck;
  ParamTensor<T> cls_w, cls_b;

  std::vector<ParamTensor<T>*> params() {
    std::vector<ParamTensor<T>*> out;
    auto add_block = [&out](ConvBlock<T>& b) {
      out.push_back(&b.w);
      out.push_back(&b.b);
      out.push_back(&b.bn.gamma);
      out.push_back(&b.bn.beta);
    };
    add_block(shallow_rgb);
    if (ir_enabled) add_block(shallow_ir);
    for (auto& b : shared) add_block(b);
    if (use_nonlocal)
      for (auto* p : {&nl.theta_w, &nl.phi_w, &nl.g_w, &nl.wz_w})
        out.push_back(p);
    out.push_back(&embed_w);
    out.push_back(&embed_b);
    out.push_back(&bnneck.gamma);
    out.push_back(&bnneck.beta);
    out.push_back(&cls_w);
    out.push_back(&cls_b);
    return out;
  }

  void set_mode(BNMode m) {
    shallow_rgb.bn.mode = m;
    shallow_ir.bn.mode = m;
    for (auto& b : shared) b.bn.mode = m;
    bnneck.mode = m;
  }
  void set_update_running(bool v) {
    shallow_rgb.bn.update_running = v;
    shallow_ir.bn.update_running = v;
    for (auto& b : shared) b.bn.update_running = v;
    bnneck.update_running = v;
  }
  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }
};

inline constexpr int kBackboneWidths[4] = {16, 32, 64, 64};

template <typename T>
BackboneParams<T> backbone_init(int n_classes, std::mt19937& rng, bool use_nonlocal = false,
                                bool ir_enabled = true) {
  if (n_classes < 1) throw std::invalid_argument("backbone_init: need at least one identity");
  BackboneParams<T> p;
  p.ir_enabled = ir_enabled;
  p.use_nonlocal = use_nonlocal;
  p.n_classes = n_classes;
  p.shallow_rgb = make_conv_block<T>("backbone.shallow_rgb", 3, kBackboneWidths[0], 2, rng);
  p.shallow_ir = make_conv_block<T>("backbone.shallow_ir", 3, kBackboneWidths[0], 2, rng);
  p.shared[0] =
      make_conv_block<T>("backbone.shared1", kBackboneWidths[0], kBackboneWidths[1], 2, rng);
  p.shared[1] =
      make_conv_block<T>("backbone.shared2", kBackboneWidths[1], kBackboneWidths[2], 1, rng);
  p.shared[2] =
      make_conv_block<T>("backbone.shared3", kBackboneWidths[2], kBackboneWidths[3], 2, rng);
  p.nl = make_nonlocal<T>("backbone.nonlocal", kBackboneWidths[1], rng);
  p.embed_w = ParamTensor<T>("backbone.embed.w", {p.d_emb, kBackboneWidths[3]});
  p.embed_b = ParamTensor<T>("backbone.embed.b", {p.d_emb}, /*decay=*/false);
  init_fanin_uniform(p.embed_w, rng);
  p.bnneck = BNState<T>("backbone.bnneck", p.d_emb);
  p.cls_w = ParamTensor<T>("classifier.w", {n_classes, p.d_emb});
  p.cls_b = ParamTensor<T>("classifier.b", {n_classes}, /*decay=*/false);
  init_fanin_uniform(p.cls_w, rng);
  return p;
}

template <typename T>
struct BackboneCache {
  int n_rgb = 0, n_ir = 0;
  ConvBlockCache<T> sh_rgb, sh_ir;
  std::array<ConvBlockCache<T>, 3> shared;
  NonLocalCache<T> nl;
  std::vector<int> prepool_shape;
  Tensor<T> prepool;   // last shared activation (translation-covariance probe)
  Tensor<T> pooled;    // N x C
  Tensor<T> bn_feats;  // N x D after the neck BN
};

template <typename T>
struct EmbedOut {
  Tensor<T> features;  // N x D, pre-neck (distance losses, retrieval)
  Tensor<T> logits;    // N x K, post-neck (identity loss)
};

// RGB rows first, then IR rows; either side may be empty (not both).
template <typename T>
EmbedOut<T> backbone_forward_mixed(const Tensor<T>& x_rgb, const Tensor<T>& x_ir,
                                   BackboneParams<T>& p, BackboneCache<T>& c) {
  c.n_rgb = x_rgb.numel() ? x_rgb.dim(0) : 0;
  c.n_ir = x_ir.numel() ? x_ir.dim(0) : 0;
  if (c.n_rgb + c.n_ir == 0) throw std::invalid_argument("backbone: empty batch");
  if (c.n_ir > 0 && !p.ir_enabled)
    throw std::invalid_argument(
        "backbone: IR-stream input given but the IR path is disabled (cloth-change regime)");

  Tensor<T> h_rgb, h_ir;
  if (c.n_rgb > 0) h_rgb = conv_block_forward(x_rgb, p.shallow_rgb, c.sh_rgb);
  if (c.n_ir > 0) h_ir = conv_block_forward(x_ir, p.shallow_ir, c.sh_ir);
  Tensor<T> h = concat_rows(h_rgb, h_ir);

  h = conv_block_forward(h, p.shared[0], c.shared[0]);
  if (p.use_nonlocal) h = nonlocal_forward(h, p.nl, c.nl);
  h = conv_block_forward(h, p.shared[1], c.shared[1]);
  h = conv_block_forward(h, p.shared[2], c.shared[2]);
  c.prepool_shape = h.shape;
  c.prepool = h;

  c.pooled = global_avg_pool(h);
  EmbedOut<T> out;
  out.features = linear(c.pooled, p.embed_w.value, p.embed_b.value);

  const int n = out.features.dim(0);
  auto bn4 = batch_norm(reshape(out.features, {n, p.d_emb, 1, 1}), p.bnneck);
  c.bn_feats = reshape(bn4, {n, p.d_emb});
  out.logits = linear(c.bn_feats, p.cls_w.value, p.cls_b.value);
  return out;
}

// dfeatures and/or dlogits may be empty tensors (treated as zero).
template <typename T>
void backbone_backward_mixed(const Tensor<T>& dfeatures, const Tensor<T>& dlogits,
                             BackboneParams<T>& p, BackboneCache<T>& c,
                             std::type_identity_t<Tensor<T>*> dx_rgb,
                             std::type_identity_t<Tensor<T>*> dx_ir) {
  const int n = c.n_rgb + c.n_ir;
  Tensor<T> dfeat({n, p.d_emb});
  if (dlogits.numel() > 0) {
    auto dbn =
        linear_backward(c.bn_feats, p.cls_w.value, dlogits, p.cls_w.grad, p.cls_b.grad);
    auto dbn4 = batch_norm_backward(reshape(dbn, {n, p.d_emb, 1, 1}), p.bnneck);
    dfeat = reshape(dbn4, {n, p.d_emb});
  }
  if (dfeatures.numel() > 0)
    for (std::size_t i = 0; i < dfeat.numel(); ++i) dfeat[i] += dfeatures[i];

  auto dpooled = linear_backward(c.pooled, p.embed_w.value, dfeat, p.embed_w.grad, p.embed_b.grad);
  auto dh = global_avg_pool_backward(dpooled, c.prepool_shape);
  dh = conv_block_backward(dh, p.shared[2], c.shared[2]);
  dh = conv_block_backward(dh, p.shared[1], c.shared[1]);
  if (p.use_nonlocal) dh = nonlocal_backward(dh, p.nl, c.nl);
  dh = conv_block_backward(dh, p.shared[0], c.shared[0]);

  if (c.n_rgb > 0) {
    auto d = slice_rows(dh, 0, c.n_rgb);
    auto dx = conv_block_backward(d, p.shallow_rgb, c.sh_rgb);
    if (dx_rgb) *dx_rgb = std::move(dx);
  }
  if (c.n_ir > 0) {
    auto d = slice_rows(dh, c.n_rgb, c.n_ir);
    auto dx = conv_block_backward(d, p.shallow_ir, c.sh_ir);
    if (dx_ir) *dx_ir = std::move(dx);
  }
}

// Single-stream convenience wrapper.
template <typename T>
EmbedOut<T> embed(const Tensor<T>& x, Stream stream, BackboneParams<T>& p) {
  if (x.numel() == 0 || x.dim(0) == 0)
    throw std::invalid_argument("backbone: empty batch");
  BackboneCache<T> c;
  if (stream == Stream::RGB) return backbone_forward_mixed(x, Tensor<T>(), p, c);
  return backbone_forward_mixed(Tensor<T>(), x, p, c);
}

}  // namespace cclab
