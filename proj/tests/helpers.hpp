#pragma once
// Shared helpers for the unit suites.

#include <random>
#include <stdexcept>
#include <string>

#include "cclab/tensor.hpp"

namespace cclab::testutil {

template <typename T>
void fill_uniform(Tensor<T>& t, std::mt19937& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data) v = static_cast<T>(d(rng));
}

// Uniform values over [lo,hi] with |v| >= margin, so finite differences never
// straddle the relu kink.
template <typename T>
void fill_uniform_away_from_zero(Tensor<T>& t, std::mt19937& rng, double lo, double hi,
                                 double margin) {
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.data) {
    double x = d(rng);
    while (std::abs(x) < margin) x = d(rng);
    v = static_cast<T>(x);
  }
}

template <typename T>
T dot(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("dot: shape mismatch");
  T s = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

// Runs fn, returns the exception message ("" if nothing was thrown).
template <typename Fn>
std::string thrown_message(Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

inline bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

}  // namespace cclab::testutil
