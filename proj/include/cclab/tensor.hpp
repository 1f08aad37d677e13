#pragma once
// Dense row-major tensor storage and named parameter slots.
// T is float for training, double for gradient checking.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cclab {

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    data.assign(numel_of(shape), fill);
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("tensor shape has negative dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t numel() const { return data.size(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // NCHW accessors; no bounds checks in release builds.
  T& at4(int n, int c, int h, int w) {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& at4(int n, int c, int h, int w) const {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  T& at3(int c, int h, int w) {
    return data[(static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w];
  }
  const T& at3(int c, int h, int w) const {
    return data[(static_cast<std::size_t>(c) * shape[1] + h) * shape[2] + w];
  }
  T& at2(int i, int j) { return data[static_cast<std::size_t>(i) * shape[1] + j]; }
  const T& at2(int i, int j) const { return data[static_cast<std::size_t>(i) * shape[1] + j]; }

  void fill(T v) { data.assign(data.size(), v); }

  void zero() { fill(T(0)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

// A learnable tensor with its gradient slot. `decay` marks weight-decay
// eligibility (false for biases and batch-norm scale/shift).
template <typename T>
struct ParamTensor {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;
  bool decay = true;

  ParamTensor() = default;
  ParamTensor(std::string n, std::vector<int> shape, bool decay_ = true)
      : name(std::move(n)), value(shape), grad(std::move(shape)), decay(decay_) {}

  void zero_grad() { grad.zero(); }
};

// Concatenate along dim 0. Shapes must agree on the remaining dims.
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.numel() == 0) return b;
  if (b.numel() == 0) return a;
  if (a.ndim() != b.ndim())
    throw std::invalid_argument("concat_rows: rank mismatch " + shape_str(a.shape) + " vs " +
                                shape_str(b.shape));
  for (int i = 1; i < a.ndim(); ++i)
    if (a.shape[i] != b.shape[i])
      throw std::invalid_argument("concat_rows: trailing dims differ " + shape_str(a.shape) +
                                  " vs " + shape_str(b.shape));
  std::vector<int> s = a.shape;
  s[0] += b.shape[0];
  Tensor<T> out(s);
  std::copy(a.data.begin(), a.data.end(), out.data.begin());
  std::copy(b.data.begin(), b.data.end(), out.data.begin() + a.data.size());
  return out;
}

// Same data, new shape; element count must match.
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<int> new_shape) {
  if (Tensor<T>::numel_of(new_shape) != x.numel())
    throw std::invalid_argument("reshape: " + shape_str(x.shape) + " to " + shape_str(new_shape) +
                                " changes the element count");
  Tensor<T> out;
  out.shape = std::move(new_shape);
  out.data = x.data;
  return out;
}

// Scales each row of an N x D matrix to unit Euclidean norm. Zero rows stay
// zero (guarded denominator).
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x) {
  if (x.ndim() != 2) throw std::invalid_argument("l2_normalize_rows: expected NxD");
  const int n = x.dim(0), d = x.dim(1);
  Tensor<T> out(x.shape);
  for (int i = 0; i < n; ++i) {
    const T* row = x.ptr() + static_cast<std::size_t>(i) * d;
    T* orow = out.ptr() + static_cast<std::size_t>(i) * d;
    T sq = 0;
    for (int j = 0; j < d; ++j) sq += row[j] * row[j];
    const T norm = std::sqrt(sq);
    const T inv = norm > T(1e-12) ? T(1) / norm : T(0);
    for (int j = 0; j < d; ++j) orow[j] = row[j] * inv;
  }
  return out;
}

// Rows [row0, row0+nrows) along dim 0.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, int row0, int nrows) {
  std::vector<int> s = x.shape;
  if (row0 < 0 || nrows < 0 || row0 + nrows > s[0])
    throw std::invalid_argument("slice_rows: range out of bounds for " + shape_str(x.shape));
  std::size_t stride = x.numel() / static_cast<std::size_t>(s[0] == 0 ? 1 : s[0]);
  s[0] = nrows;
  Tensor<T> out(s);
  std::copy(x.data.begin() + row0 * stride, x.data.begin() + (row0 + nrows) * stride,
            out.data.begin());
  return out;
}

}  // namespace cclab
