#pragma once

#include <cmath>

#include "ulfe/metrics/metrics.hpp"
#include "ulfe/nn/conv.hpp"
#include "ulfe/nn/ops.hpp"

// Differentiable twins of the reference metrics, for use inside losses. They operate
// on (C, D, H, W) activations and agree with the reference evaluation on each channel
// away from the PSNR cap.

namespace ulfe::metrics {

template <typename S>
nn::Var<S> mae_var(const nn::Var<S>& a, const nn::Var<S>& b) {
  return nn::mean(nn::abs(nn::sub(a, b)));
}

template <typename S>
nn::Var<S> mse_var(const nn::Var<S>& a, const nn::Var<S>& b) {
  return nn::mean(nn::square(nn::sub(a, b)));
}

// -10*log10(max(mse, 10^(-cap/10))): equals PSNR below the cap and saturates at
// `cap_db` (with zero gradient) as the pair approaches identity, keeping the loss finite.
template <typename S>
nn::Var<S> psnr_capped_var(const nn::Var<S>& a, const nn::Var<S>& b, double cap_db = 50.0) {
  const S floor = static_cast<S>(std::pow(10.0, -cap_db / 10.0));
  return nn::mul_s(nn::log(nn::clamp_min(mse_var(a, b), floor)), static_cast<S>(-10.0 / std::log(10.0)));
}

template <typename S>
nn::Var<S> nmse_var(const nn::Var<S>& a, const nn::Var<S>& b) {
  return nn::div(nn::sum(nn::square(nn::sub(a, b))), nn::sum(nn::square(b)));
}

// Mean SSIM across channels; each channel's local statistics come from a Gaussian
// window applied with reflect padding, matching the reference implementation.
template <typename S>
nn::Var<S> ssim_var(const nn::Var<S>& a, const nn::Var<S>& b, const SsimParams& params = {}) {
  if (a->value.rank() != 4 || !same_shape(a->value, b->value))
    throw std::invalid_argument("ssim_var: expects matching (C, D, H, W) inputs");
  const index_t k = params.support;
  const index_t r = k / 2;
  Tensor<S> kernel(Shape{1, 1, k, k, k});
  {
    const double s2 = params.sigma * params.sigma;
    double total = 0;
    for (index_t d = 0; d < k; ++d)
      for (index_t h = 0; h < k; ++h)
        for (index_t w = 0; w < k; ++w) {
          const double q = static_cast<double>((d - r) * (d - r) + (h - r) * (h - r) + (w - r) * (w - r));
          const double g = std::exp(-0.5 * q / s2);
          kernel[(d * k + h) * k + w] = static_cast<S>(g);
          total += g;
        }
    for (index_t i = 0; i < kernel.numel(); ++i)
      kernel[i] = static_cast<S>(static_cast<double>(kernel[i]) / total);
  }
  auto kv = nn::constant(kernel);
  auto smooth = [&](const nn::Var<S>& x) { return nn::conv3d(x, kv, nn::Var<S>{}, 1, r, nn::Pad::reflect); };

  const index_t C = a->value.dim(0);
  const S c1 = static_cast<S>(params.c1), c2 = static_cast<S>(params.c2);
  nn::Var<S> total;
  for (index_t c = 0; c < C; ++c) {
    auto xa = nn::narrow(a, 0, c, 1);
    auto xb = nn::narrow(b, 0, c, 1);
    auto mu_a = smooth(xa);
    auto mu_b = smooth(xb);
    auto var_a = nn::sub(smooth(nn::square(xa)), nn::square(mu_a));
    auto var_b = nn::sub(smooth(nn::square(xb)), nn::square(mu_b));
    auto cov = nn::sub(smooth(nn::mul(xa, xb)), nn::mul(mu_a, mu_b));
    auto num = nn::mul(nn::add_s(nn::mul_s(nn::mul(mu_a, mu_b), S(2)), c1),
                       nn::add_s(nn::mul_s(cov, S(2)), c2));
    auto den = nn::mul(nn::add_s(nn::add(nn::square(mu_a), nn::square(mu_b)), c1),
                       nn::add_s(nn::add(var_a, var_b), c2));
    auto channel = nn::mean(nn::div(num, den));
    total = total ? nn::add(total, channel) : channel;
  }
  return nn::mul_s(total, static_cast<S>(1.0 / static_cast<double>(C)));
}

// 0.7*ssim + 0.1*psnr_capped + 0.1*(1 - mae) + 0.1*(1 - nmse), all differentiable.
template <typename S>
nn::Var<S> weighted_score_var(const nn::Var<S>& a, const nn::Var<S>& b, double psnr_cap_db = 50.0,
                              const SsimParams& params = {}) {
  auto s = nn::mul_s(ssim_var(a, b, params), S(0.7));
  auto p = nn::mul_s(psnr_capped_var(a, b, psnr_cap_db), S(0.1));
  auto m = nn::mul_s(mae_var(a, b), S(-0.1));
  auto n = nn::mul_s(nmse_var(a, b), S(-0.1));
  return nn::add_s(nn::add(nn::add(s, p), nn::add(m, n)), S(0.2));
}

}  // namespace ulfe::metrics
