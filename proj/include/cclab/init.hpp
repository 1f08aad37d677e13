#pragma once
// Weight initialization: uniform(-a, a) with a = sqrt(1/fan_in), biases zero.
// fan_in is the product of all weight dims after the first (input channels
// times kernel area for convs, input width for linear layers).

#include <cmath>
#include <random>

#include "cclab/tensor.hpp"

namespace cclab {

template <typename T>
void init_fanin_uniform(ParamTensor<T>& w, std::mt19937& rng) {
  double fan_in = 1.0;
  for (int i = 1; i < w.value.ndim(); ++i) fan_in *= w.value.dim(i);
  const double a = std::sqrt(1.0 / fan_in);
  std::uniform_real_distribution<double> d(-a, a);
  for (auto& v : w.value.data) v = static_cast<T>(d(rng));
}

}  // namespace cclab
