#pragma once

#include <cmath>

#include "ulfe/core/rng.hpp"
#include "ulfe/core/tensor.hpp"

namespace ulfe {
namespace nn {

template <typename S>
Tensor<S> zeros(Shape s) {
  return Tensor<S>(std::move(s), S(0));
}

template <typename S>
Tensor<S> ones(Shape s) {
  return Tensor<S>(std::move(s), S(1));
}

template <typename S>
Tensor<S> full(Shape s, S v) {
  return Tensor<S>(std::move(s), v);
}

/// N(0, gain^2 / fan_in) — He-style init for conv/linear weights.
template <typename S>
Tensor<S> kaiming_normal(Shape s, index_t fan_in, Rng& rng, double gain = std::sqrt(2.0)) {
  Tensor<S> t(std::move(s));
  const double sigma = gain / std::sqrt(static_cast<double>(fan_in));
  for (index_t i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(rng.normal(0.0, sigma));
  return t;
}

/// N(0, sigma^2) resampled into [-2 sigma, 2 sigma].
template <typename S>
Tensor<S> trunc_normal(Shape s, Rng& rng, double sigma = 0.02) {
  Tensor<S> t(std::move(s));
  for (index_t i = 0; i < t.numel(); ++i) {
    double v = rng.normal(0.0, sigma);
    while (std::fabs(v) > 2.0 * sigma) v = rng.normal(0.0, sigma);
    t[i] = static_cast<S>(v);
  }
  return t;
}

/// U(-a, a) with a = gain * sqrt(6 / (fan_in + fan_out)).
template <typename S>
Tensor<S> xavier_uniform(Shape s, index_t fan_in, index_t fan_out, Rng& rng, double gain = 1.0) {
  Tensor<S> t(std::move(s));
  const double a = gain * std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (index_t i = 0; i < t.numel(); ++i) t[i] = static_cast<S>(rng.uniform(-a, a));
  return t;
}

}  // namespace nn
}  // namespace ulfe
