#pragma once

#include <stdexcept>

#include "ulfe/metrics/diff.hpp"
#include "ulfe/nn/conv.hpp"
#include "ulfe/nn/ops.hpp"

// Content-loss components for paired enhancement training: pixel-wise L1, a capped
// negative-PSNR term, and an edge term comparing 3D Sobel gradient magnitudes.

namespace ulfe::trex {

struct ContentLossWeights {
  double w_l1 = 1.0;
  double w_psnr = 0.01;  // scaled so a ~20 dB signal is commensurate with L1
  double w_sobel = 1.0;
};

inline void validate(const ContentLossWeights& w) {
  if (w.w_l1 < 0 || w.w_psnr < 0 || w.w_sobel < 0)
    throw std::invalid_argument("content loss weights must be nonnegative");
  if (w.w_l1 == 0 && w.w_psnr == 0 && w.w_sobel == 0)
    throw std::invalid_argument("at least one content loss weight must be positive");
}

// Mean absolute difference between the 3D Sobel gradient-magnitude maps of the two
// volumes, with reflect padding so constant volumes produce zero response.
// Magnitude = sqrt(Gx^2 + Gy^2 + Gz^2 + eps); blind to DC offsets by construction.
template <typename S>
nn::Var<S> sobel_loss(const nn::Var<S>& pred, const nn::Var<S>& target, double eps = 1e-12) {
  if (pred->value.rank() != 4 || !same_shape(pred->value, target->value))
    throw std::invalid_argument("sobel_loss: shape mismatch");
  const index_t C = pred->value.dim(0);
  const S smooth[3] = {S(1), S(2), S(1)};
  const S deriv[3] = {S(-1), S(0), S(1)};
  auto kernel = [&](int axis) {
    Tensor<S> w(Shape{C, C, 3, 3, 3});
    w.fill(S(0));
    for (index_t c = 0; c < C; ++c)
      for (index_t d = 0; d < 3; ++d)
        for (index_t h = 0; h < 3; ++h)
          for (index_t i = 0; i < 3; ++i)
            w[(((c * C + c) * 3 + d) * 3 + h) * 3 + i] =
                (axis == 0 ? deriv[d] : smooth[d]) * (axis == 1 ? deriv[h] : smooth[h]) *
                (axis == 2 ? deriv[i] : smooth[i]);
    return nn::constant(std::move(w));
  };
  auto magnitude = [&](const nn::Var<S>& x) {
    auto gz = nn::conv3d(x, kernel(0), nn::Var<S>{}, 1, 1, nn::Pad::reflect);
    auto gy = nn::conv3d(x, kernel(1), nn::Var<S>{}, 1, 1, nn::Pad::reflect);
    auto gx = nn::conv3d(x, kernel(2), nn::Var<S>{}, 1, 1, nn::Pad::reflect);
    return nn::sqrt(nn::add_s(nn::add(nn::square(gz), nn::add(nn::square(gy), nn::square(gx))),
                              static_cast<S>(eps)));
  };
  return nn::mean(nn::abs(nn::sub(magnitude(pred), magnitude(target))));
}

// Negative capped PSNR: -min(10*log10(1/MSE), cap). Decreasing in reconstruction
// quality; identical inputs sit at the cap instead of diverging.
template <typename S>
nn::Var<S> psnr_term(const nn::Var<S>& pred, const nn::Var<S>& target, double cap_db = 50.0) {
  if (!same_shape(pred->value, target->value))
    throw std::invalid_argument("psnr_term: shape mismatch");
  return nn::neg(metrics::psnr_capped_var(pred, target, cap_db));
}

// w_l1*L1 + w_psnr*psnr_term + w_sobel*sobel_loss; zero-weight components are not
// evaluated, so w = (1,0,0) is plain L1 exactly.
template <typename S>
nn::Var<S> content_loss(const nn::Var<S>& pred, const nn::Var<S>& target,
                        const ContentLossWeights& w, double psnr_cap_db = 50.0) {
  if (pred->value.rank() != 4 || !same_shape(pred->value, target->value))
    throw std::invalid_argument("content_loss: shape mismatch");
  validate(w);
  nn::Var<S> total;
  auto accumulate = [&](double weight, nn::Var<S> term) {
    term = nn::mul_s(std::move(term), static_cast<S>(weight));
    total = total ? nn::add(total, term) : term;
  };
  if (w.w_l1 > 0) accumulate(w.w_l1, metrics::mae_var(pred, target));
  if (w.w_psnr > 0) accumulate(w.w_psnr, psnr_term(pred, target, psnr_cap_db));
  if (w.w_sobel > 0) accumulate(w.w_sobel, sobel_loss(pred, target));
  return total;
}

}  // namespace ulfe::trex
