#pragma once
// Forward and backward primitives over dense tensors: conv2d, batch norm,
// relu, linear, global average pooling, softmax cross-entropy.
// Backward functions accumulate into parameter gradients and return input
// gradients. All reductions run in a fixed order.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "cclab/tensor.hpp"

namespace cclab {

namespace detail {
// First output column with a valid input column for a given kernel offset,
// and one past the last. iw = ow*stride - pad + kw must land in [0, W).
inline int ow_lo(int pad, int kw, int stride) {
  int num = pad - kw;
  if (num <= 0) return 0;
  return (num + stride - 1) / stride;
}
inline int ow_hi(int w_in, int w_out, int pad, int kw, int stride) {
  int num = w_in - 1 + pad - kw;
  if (num < 0) return 0;
  return std::min(w_out, num / stride + 1);
}

// One image unrolled to a (C_in*k*k) x (H_out*W_out) patch matrix so the
// convolution becomes a matrix product with unit-stride inner loops. Row
// order (ci, kh, kw) matches the weight layout. A 1x1/stride-1/no-pad call
// aliases the image instead of copying.
template <typename T>
struct PatchMatrix {
  std::vector<T> buf;
  const T* data = nullptr;
  int rows = 0, cols = 0;

  void fill(const T* img, int c_in, int h_in, int w_in, int k, int stride, int pad, int h_out,
            int w_out) {
    rows = c_in * k * k;
    cols = h_out * w_out;
    if (k == 1 && stride == 1 && pad == 0) {
      data = img;
      return;
    }
    const std::size_t need = static_cast<std::size_t>(rows) * cols;
    if (pad > 0) {
      buf.assign(need, T(0));  // boundary cells must read as zero
    } else if (buf.size() != need) {
      buf.resize(need);
    }
    for (int ci = 0; ci < c_in; ++ci)
      for (int kh = 0; kh < k; ++kh)
        for (int kw = 0; kw < k; ++kw) {
          const int r = (ci * k + kh) * k + kw;
          T* dst = buf.data() + static_cast<std::size_t>(r) * cols;
          const T* src = img + static_cast<std::size_t>(ci) * h_in * w_in;
          const int lo = ow_lo(pad, kw, stride);
          const int hi = ow_hi(w_in, w_out, pad, kw, stride);
          for (int oh = 0; oh < h_out; ++oh) {
            const int ih = oh * stride - pad + kh;
            if (ih < 0 || ih >= h_in) continue;
            const T* srow = src + static_cast<std::size_t>(ih) * w_in - pad + kw;
            T* drow = dst + static_cast<std::size_t>(oh) * w_out;
            if (stride == 1) {
              for (int ow = lo; ow < hi; ++ow) drow[ow] = srow[ow];
            } else {
              for (int ow = lo; ow < hi; ++ow) drow[ow] = srow[ow * stride];
            }
          }
        }
    data = buf.data();
  }

  // Scatter-add the same layout back into an image (input gradient).
  static void scatter_add(const T* cells, T* img, int c_in, int h_in, int w_in, int k,
                          int stride, int pad, int h_out, int w_out) {
    const int cols = h_out * w_out;
    if (k == 1 && stride == 1 && pad == 0) {
      const std::size_t n = static_cast<std::size_t>(c_in) * h_in * w_in;
      for (std::size_t i = 0; i < n; ++i) img[i] += cells[i];
      return;
    }
    for (int ci = 0; ci < c_in; ++ci)
      for (int kh = 0; kh < k; ++kh)
        for (int kw = 0; kw < k; ++kw) {
          const int r = (ci * k + kh) * k + kw;
          const T* srcr = cells + static_cast<std::size_t>(r) * cols;
          T* dst = img + static_cast<std::size_t>(ci) * h_in * w_in;
          const int lo = ow_lo(pad, kw, stride);
          const int hi = ow_hi(w_in, w_out, pad, kw, stride);
          for (int oh = 0; oh < h_out; ++oh) {
            const int ih = oh * stride - pad + kh;
            if (ih < 0 || ih >= h_in) continue;
            T* drow = dst + static_cast<std::size_t>(ih) * w_in - pad + kw;
            const T* srow = srcr + static_cast<std::size_t>(oh) * w_out;
            for (int ow = lo; ow < hi; ++ow) drow[ow * stride] += srow[ow];
          }
        }
  }
};
}  // namespace detail

// ---------------------------------------------------------------- conv2d --

// Cross-correlation. x: N x C_in x H x W (or C_in x H x W, treated as N=1),
// w: C_out x C_in x k x k, b: C_out (may be empty for no bias).
// k in {1,3}, pad in {0,(k-1)/2}.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x_in, const Tensor<T>& w, const Tensor<T>& b, int stride,
                 int pad) {
  const bool batched = x_in.ndim() == 4;
  if (!batched && x_in.ndim() != 3)
    throw std::invalid_argument("conv2d: input must be CxHxW or NxCxHxW, got " +
                                shape_str(x_in.shape));
  if (w.ndim() != 4) throw std::invalid_argument("conv2d: weight must be 4-d");
  const int n_batch = batched ? x_in.dim(0) : 1;
  const int c_in = batched ? x_in.dim(1) : x_in.dim(0);
  const int h_in = batched ? x_in.dim(2) : x_in.dim(1);
  const int w_in = batched ? x_in.dim(3) : x_in.dim(2);
  const int c_out = w.dim(0);
  const int k = w.dim(2);
  if (w.dim(1) != c_in)
    throw std::invalid_argument("conv2d: input channels " + shape_str(x_in.shape) +
                                " do not match weight " + shape_str(w.shape));
  if (w.dim(3) != k) throw std::invalid_argument("conv2d: non-square kernel");
  if (k != 1 && k != 3) throw std::invalid_argument("conv2d: kernel size must be 1 or 3");
  if (pad != 0 && pad != (k - 1) / 2) throw std::invalid_argument("conv2d: unsupported padding");
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (h_in < k || w_in < k) throw std::invalid_argument("conv2d: input smaller than kernel");
  if (b.numel() != 0 && static_cast<int>(b.numel()) != c_out)
    throw std::invalid_argument("conv2d: bias length mismatch");

  const int h_out = (h_in + 2 * pad - k) / stride + 1;
  const int w_out = (w_in + 2 * pad - k) / stride + 1;
  Tensor<T> y(batched ? std::vector<int>{n_batch, c_out, h_out, w_out}
                      : std::vector<int>{c_out, h_out, w_out});

  const T* xp = x_in.ptr();
  const T* wp = w.ptr();
  T* yp = y.ptr();
  const std::size_t x_img = static_cast<std::size_t>(c_in) * h_in * w_in;
  const std::size_t y_img = static_cast<std::size_t>(c_out) * h_out * w_out;
  const int kk = c_in * k * k;
  const int pos = h_out * w_out;
  detail::PatchMatrix<T> pm;
  for (int n = 0; n < n_batch; ++n) {
    pm.fill(xp + n * x_img, c_in, h_in, w_in, k, stride, pad, h_out, w_out);
    const T* col = pm.data;
    T* ybase = yp + n * y_img;
    // four output channels per pass so each patch row is streamed once
    int co = 0;
    for (; co + 4 <= c_out; co += 4) {
      T* y0 = ybase + static_cast<std::size_t>(co) * pos;
      T* y1 = y0 + pos;
      T* y2 = y1 + pos;
      T* y3 = y2 + pos;
      const T bias0 = b.numel() ? b[co] : T(0);
      const T bias1 = b.numel() ? b[co + 1] : T(0);
      const T bias2 = b.numel() ? b[co + 2] : T(0);
      const T bias3 = b.numel() ? b[co + 3] : T(0);
      for (int i = 0; i < pos; ++i) {
        y0[i] = bias0;
        y1[i] = bias1;
        y2[i] = bias2;
        y3[i] = bias3;
      }
      const T* w0 = wp + static_cast<std::size_t>(co) * kk;
      for (int r = 0; r < kk; ++r) {
        const T* crow = col + static_cast<std::size_t>(r) * pos;
        const T v0 = w0[r];
        const T v1 = w0[kk + r];
        const T v2 = w0[2 * kk + r];
        const T v3 = w0[3 * kk + r];
        for (int i = 0; i < pos; ++i) {
          const T c = crow[i];
          y0[i] += v0 * c;
          y1[i] += v1 * c;
          y2[i] += v2 * c;
          y3[i] += v3 * c;
        }
      }
    }
    for (; co < c_out; ++co) {
      T* yr = ybase + static_cast<std::size_t>(co) * pos;
      const T bias = b.numel() ? b[co] : T(0);
      for (int i = 0; i < pos; ++i) yr[i] = bias;
      const T* wrow = wp + static_cast<std::size_t>(co) * kk;
      for (int r = 0; r < kk; ++r) {
        const T* crow = col + static_cast<std::size_t>(r) * pos;
        const T v = wrow[r];
        for (int i = 0; i < pos; ++i) yr[i] += v * crow[i];
      }
    }
  }
  return y;
}

// Accumulates dw/db; returns dx. Shapes as in the forward call.
template <typename T>
Tensor<T> conv2d_backward(const Tensor<T>& x_in, const Tensor<T>& w, const Tensor<T>& dy,
                          int stride, int pad, Tensor<T>& dw, Tensor<T>& db) {
  const bool batched = x_in.ndim() == 4;
  const int n_batch = batched ? x_in.dim(0) : 1;
  const int c_in = batched ? x_in.dim(1) : x_in.dim(0);
  const int h_in = batched ? x_in.dim(2) : x_in.dim(1);
  const int w_in = batched ? x_in.dim(3) : x_in.dim(2);
  const int c_out = w.dim(0);
  const int k = w.dim(2);
  const int h_out = (h_in + 2 * pad - k) / stride + 1;
  const int w_out = (w_in + 2 * pad - k) / stride + 1;
  if (!dw.same_shape(w)) throw std::invalid_argument("conv2d_backward: dw shape mismatch");

  Tensor<T> dx(x_in.shape);
  const T* xp = x_in.ptr();
  const T* wp = w.ptr();
  const T* dyp = dy.ptr();
  T* dxp = dx.ptr();
  const std::size_t x_img = static_cast<std::size_t>(c_in) * h_in * w_in;
  const std::size_t y_img = static_cast<std::size_t>(c_out) * h_out * w_out;
  const int kk = c_in * k * k;
  const int pos = h_out * w_out;
  detail::PatchMatrix<T> pm;
  std::vector<T> dcol(static_cast<std::size_t>(kk) * pos);
  for (int n = 0; n < n_batch; ++n) {
    pm.fill(xp + n * x_img, c_in, h_in, w_in, k, stride, pad, h_out, w_out);
    const T* col = pm.data;
    const T* dybase = dyp + n * y_img;
    if (db.numel()) {
      for (int co = 0; co < c_out; ++co) {
        const T* dyr = dybase + static_cast<std::size_t>(co) * pos;
        T s = 0;
        for (int i = 0; i < pos; ++i) s += dyr[i];
        db[co] += s;
      }
    }
    std::fill(dcol.begin(), dcol.end(), T(0));
    // dw row = dy row . patch rows; dcol row accumulates w^T dy. Four output
    // channels per pass so the patch matrix is streamed once per block.
    int co = 0;
    for (; co + 4 <= c_out; co += 4) {
      const T* dy0 = dybase + static_cast<std::size_t>(co) * pos;
      const T* dy1 = dy0 + pos;
      const T* dy2 = dy1 + pos;
      const T* dy3 = dy2 + pos;
      T* dw0 = dw.ptr() + static_cast<std::size_t>(co) * kk;
      const T* w0 = wp + static_cast<std::size_t>(co) * kk;
      for (int r = 0; r < kk; ++r) {
        const T* crow = col + static_cast<std::size_t>(r) * pos;
        T* drow = dcol.data() + static_cast<std::size_t>(r) * pos;
        const T v0 = w0[r];
        const T v1 = w0[kk + r];
        const T v2 = w0[2 * kk + r];
        const T v3 = w0[3 * kk + r];
        T g0 = 0, g1 = 0, g2 = 0, g3 = 0;
        for (int i = 0; i < pos; ++i) {
          const T c = crow[i];
          g0 += dy0[i] * c;
          g1 += dy1[i] * c;
          g2 += dy2[i] * c;
          g3 += dy3[i] * c;
          drow[i] += v0 * dy0[i] + v1 * dy1[i] + v2 * dy2[i] + v3 * dy3[i];
        }
        dw0[r] += g0;
        dw0[kk + r] += g1;
        dw0[2 * kk + r] += g2;
        dw0[3 * kk + r] += g3;
      }
    }
    for (; co < c_out; ++co) {
      const T* dyr = dybase + static_cast<std::size_t>(co) * pos;
      T* dwrow = dw.ptr() + static_cast<std::size_t>(co) * kk;
      const T* wrow = wp + static_cast<std::size_t>(co) * kk;
      for (int r = 0; r < kk; ++r) {
        const T* crow = col + static_cast<std::size_t>(r) * pos;
        T* drow = dcol.data() + static_cast<std::size_t>(r) * pos;
        const T v = wrow[r];
        T g = 0;
        for (int i = 0; i < pos; ++i) {
          g += dyr[i] * crow[i];
          drow[i] += v * dyr[i];
        }
        dwrow[r] += g;
      }
    }
    detail::PatchMatrix<T>::scatter_add(dcol.data(), dxp + n * x_img, c_in, h_in, w_in, k,
                                        stride, pad, h_out, w_out);
  }
  return dx;
}

// ------------------------------------------------------------ batch norm --

enum class BNMode { Train, Eval };

template <typename T>
struct BNState {
  std::string name;
  ParamTensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
  BNMode mode = BNMode::Train;
  // When false, train-mode forward leaves running stats untouched so the
  // forward pass is a pure function (gradient-check harness).
  bool update_running = true;

  // backward cache
  Tensor<T> x_hat;
  std::vector<T> inv_std;
  BNMode cached_mode = BNMode::Train;
  int cached_m = 0;

  BNState() = default;
  BNState(const std::string& name_, int channels, T momentum_ = T(0.1), T eps_ = T(1e-5))
      : name(name_),
        gamma(name_ + ".gamma", {channels}, /*decay=*/false),
        beta(name_ + ".beta", {channels}, /*decay=*/false),
        running_mean({channels}),
        running_var({channels}, T(1)),
        momentum(momentum_),
        eps(eps_) {
    if (!(eps > T(0))) throw std::invalid_argument("batch_norm: eps must be positive");
    gamma.value.fill(T(1));
  }

  int channels() const { return gamma.value.ndim() ? gamma.value.dim(0) : 0; }
};

// x: N x C x H x W. Train mode normalizes by batch statistics (biased
// variance) and updates running stats; eval mode uses running stats.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, BNState<T>& s) {
  if (x.ndim() != 4) throw std::invalid_argument("batch_norm: input must be NxCxHxW");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c != s.channels())
    throw std::invalid_argument("batch_norm: channel mismatch " + shape_str(x.shape));
  const int m = n * h * w;
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  Tensor<T> y(x.shape);
  s.x_hat = Tensor<T>(x.shape);
  s.inv_std.assign(c, T(0));
  s.cached_mode = s.mode;
  s.cached_m = m;

  for (int ch = 0; ch < c; ++ch) {
    T mean, var;
    if (s.mode == BNMode::Train) {
      if (m < 2)
        throw std::invalid_argument(
            "batch_norm: train mode needs at least 2 values per channel, got " +
            std::to_string(m));
      T sum = 0;
      for (int ni = 0; ni < n; ++ni) {
        const T* p = x.ptr() + (static_cast<std::size_t>(ni) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) sum += p[i];
      }
      mean = sum / T(m);
      T sq = 0;
      for (int ni = 0; ni < n; ++ni) {
        const T* p = x.ptr() + (static_cast<std::size_t>(ni) * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const T d = p[i] - mean;
          sq += d * d;
        }
      }
      var = sq / T(m);
      if (s.update_running) {
        s.running_mean[ch] = (T(1) - s.momentum) * s.running_mean[ch] + s.momentum * mean;
        s.running_var[ch] = (T(1) - s.momentum) * s.running_var[ch] + s.momentum * var;
      }
    } else {
      mean = s.running_mean[ch];
      var = s.running_var[ch];
    }
    const T istd = T(1) / std::sqrt(var + s.eps);
    s.inv_std[ch] = istd;
    const T g = s.gamma.value[ch], bt = s.beta.value[ch];
    for (int ni = 0; ni < n; ++ni) {
      const T* p = x.ptr() + (static_cast<std::size_t>(ni) * c + ch) * plane;
      T* xh = s.x_hat.ptr() + (static_cast<std::size_t>(ni) * c + ch) * plane;
      T* yp = y.ptr() + (static_cast<std::size_t>(ni) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mean) * istd;
        yp[i] = g * xh[i] + bt;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> batch_norm_backward(const Tensor<T>& dy, BNState<T>& s) {
  const int n = dy.dim(0), c = dy.dim(1), h = dy.dim(2), w = dy.dim(3);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  const T m = T(s.cached_m);
  Tensor<T> dx(dy.shape);
  for (int ch = 0; ch < c; ++ch) {
    T sum_dy = 0, sum_dy_xhat = 0;
    for (int ni = 0; ni < n; ++ni) {
      const T* dyp = dy.ptr() + (static_cast<std::size_t>(ni) * c + ch) * plane;
      const T* xh = s.x_hat.ptr() + (static_cast<std::size_t>(ni) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dyp[i];
        sum_dy_xhat += dyp[i] * xh[i];
      }
    }
    s.beta.grad[ch] += sum_dy;
    s.gamma.grad[ch] += sum_dy_xhat;
    const T g = s.gamma.value[ch];
    const T istd = s.inv_std[ch];
    for (int ni = 0; ni < n; ++ni) {
      const T* dyp = dy.ptr() + (static_cast<std::size_t>(ni) * c + ch) * plane;
      const T* xh = s.x_hat.ptr() + (static_cast<std::size_t>(ni) * c + ch) * plane;
      T* dxp = dx.ptr() + (static_cast<std::size_t>(ni) * c + ch) * plane;
      if (s.cached_mode == BNMode::Train) {
        // d/dx of batch-statistic normalization
        for (std::size_t i = 0; i < plane; ++i)
          dxp[i] = g * istd / m * (m * dyp[i] - sum_dy - xh[i] * sum_dy_xhat);
      } else {
        for (std::size_t i = 0; i < plane; ++i) dxp[i] = g * istd * dyp[i];
      }
    }
  }
  return dx;
}

// ------------------------------------------------------------------ relu --

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.shape);
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& dy, const Tensor<T>& y) {
  Tensor<T> dx(dy.shape);
  for (std::size_t i = 0; i < dy.numel(); ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
  return dx;
}

// ---------------------------------------------------------------- linear --

// y = x * w^T + b. x: N x D_in, w: D_out x D_in, b: D_out.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.ndim() != 2 || w.ndim() != 2)
    throw std::invalid_argument("linear: expected 2-d input and weight");
  if (x.dim(1) != w.dim(1))
    throw std::invalid_argument("linear: input " + shape_str(x.shape) + " does not match weight " +
                                shape_str(w.shape));
  const int n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  if (b.numel() != 0 && static_cast<int>(b.numel()) != dout)
    throw std::invalid_argument("linear: bias length mismatch");
  Tensor<T> y({n, dout});
  for (int i = 0; i < n; ++i) {
    const T* xr = x.ptr() + static_cast<std::size_t>(i) * din;
    T* yr = y.ptr() + static_cast<std::size_t>(i) * dout;
    for (int o = 0; o < dout; ++o) {
      const T* wr = w.ptr() + static_cast<std::size_t>(o) * din;
      T acc = b.numel() ? b[o] : T(0);
      for (int j = 0; j < din; ++j) acc += xr[j] * wr[j];
      yr[o] = acc;
    }
  }
  return y;
}

template <typename T>
Tensor<T> linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                          Tensor<T>& dw, Tensor<T>& db) {
  const int n = x.dim(0), din = x.dim(1), dout = w.dim(0);
  Tensor<T> dx(x.shape);
  for (int i = 0; i < n; ++i) {
    const T* xr = x.ptr() + static_cast<std::size_t>(i) * din;
    const T* dyr = dy.ptr() + static_cast<std::size_t>(i) * dout;
    T* dxr = dx.ptr() + static_cast<std::size_t>(i) * din;
    for (int o = 0; o < dout; ++o) {
      const T g = dyr[o];
      if (db.numel()) db[o] += g;
      const T* wr = w.ptr() + static_cast<std::size_t>(o) * din;
      T* dwr = dw.ptr() + static_cast<std::size_t>(o) * din;
      for (int j = 0; j < din; ++j) {
        dxr[j] += g * wr[j];
        dwr[j] += g * xr[j];
      }
    }
  }
  return dx;
}

// ------------------------------------------------------------------ pool --

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.ndim() != 4) throw std::invalid_argument("global_avg_pool: input must be NxCxHxW");
  const int n = x.dim(0), c = x.dim(1);
  const std::size_t plane = static_cast<std::size_t>(x.dim(2)) * x.dim(3);
  Tensor<T> y({n, c});
  for (int ni = 0; ni < n; ++ni)
    for (int ch = 0; ch < c; ++ch) {
      const T* p = x.ptr() + (static_cast<std::size_t>(ni) * c + ch) * plane;
      T s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      y.at2(ni, ch) = s / T(plane);
    }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& dy, const std::vector<int>& x_shape) {
  Tensor<T> dx(x_shape);
  const int n = x_shape[0], c = x_shape[1];
  const std::size_t plane = static_cast<std::size_t>(x_shape[2]) * x_shape[3];
  for (int ni = 0; ni < n; ++ni)
    for (int ch = 0; ch < c; ++ch) {
      const T g = dy.at2(ni, ch) / T(plane);
      T* p = dx.ptr() + (static_cast<std::size_t>(ni) * c + ch) * plane;
      for (std::size_t i = 0; i < plane; ++i) p[i] = g;
    }
  return dx;
}

// --------------------------------------------------- softmax cross-entropy --

template <typename T>
struct SoftmaxXentOut {
  T loss = T(0);
  Tensor<T> probs;  // N x K, cached for backward
};

// Mean over rows of -log softmax(logits)[label]; max-subtraction stabilized.
template <typename T>
SoftmaxXentOut<T> softmax_cross_entropy(const Tensor<T>& logits, const std::vector<int>& labels) {
  if (logits.ndim() != 2) throw std::invalid_argument("softmax_cross_entropy: logits must be NxK");
  const int n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("softmax_cross_entropy: label count mismatch");
  SoftmaxXentOut<T> out;
  out.probs = Tensor<T>({n, k});
  T total = 0;
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k)
      throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                  " outside [0," + std::to_string(k) + ")");
    const T* lr = logits.ptr() + static_cast<std::size_t>(i) * k;
    T mx = lr[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, lr[j]);
    T sum = 0;
    for (int j = 0; j < k; ++j) sum += std::exp(lr[j] - mx);
    const T lse = mx + std::log(sum);
    total += lse - lr[y];
    T* pr = out.probs.ptr() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) pr[j] = std::exp(lr[j] - lse);
  }
  out.loss = total / T(n);
  return out;
}

template <typename T>
Tensor<T> softmax_cross_entropy_backward(const SoftmaxXentOut<T>& fwd,
                                         const std::vector<int>& labels) {
  const int n = fwd.probs.dim(0), k = fwd.probs.dim(1);
  Tensor<T> dl(fwd.probs.shape);
  for (int i = 0; i < n; ++i) {
    const T* pr = fwd.probs.ptr() + static_cast<std::size_t>(i) * k;
    T* dr = dl.ptr() + static_cast<std::size_t>(i) * k;
    for (int j = 0; j < k; ++j) dr[j] = pr[j] / T(n);
    dr[labels[static_cast<std::size_t>(i)]] -= T(1) / T(n);
  }
  return dl;
}

// log(1 + e^x) without overflow.
template <typename T>
T softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T sigmoid(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace cclab
