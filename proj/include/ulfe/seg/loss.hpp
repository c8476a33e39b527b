#pragma once

#include <memory>
#include <vector>

#include "ulfe/nn/ops.hpp"

// Training objective: equally weighted soft-Dice and cross-entropy terms, plus
// the hard overlap metric used for model selection and acceptance checks.

namespace ulfe::seg {

// logits (C, D, H, W); labels flat (D*H*W) with values in [0, C).
// Soft Dice averages the per-class overlap of softmax probabilities against
// one-hot truth; epsilon keeps classes absent from the volume neutral.
template <typename S>
nn::Var<S> dice_ce_loss(const nn::Var<S>& logits,
                        const std::shared_ptr<const std::vector<index_t>>& labels,
                        double w_dice = 1.0, double w_ce = 1.0, double epsilon = 1e-5) {
  if (logits->value.rank() != 4) throw std::invalid_argument("dice_ce_loss: logits must be (C,D,H,W)");
  const index_t C = logits->value.dim(0);
  const index_t M = logits->value.numel() / C;
  if (!labels || static_cast<index_t>(labels->size()) != M)
    throw std::invalid_argument("dice_ce_loss: label count mismatch");

  auto ce = nn::softmax_ce_mean(logits, labels);

  auto probs = nn::softmax_channels(logits);
  nn::Var<S> dice_sum;
  for (index_t c = 0; c < C; ++c) {
    Tensor<S> onehot(Shape{1, logits->value.dim(1), logits->value.dim(2), logits->value.dim(3)}, S(0));
    for (index_t m = 0; m < M; ++m)
      if ((*labels)[static_cast<std::size_t>(m)] == c) onehot[m] = S(1);
    auto y = nn::constant(std::move(onehot));
    auto p = nn::narrow(probs, 0, c, 1);
    auto inter = nn::sum(nn::mul(p, y));
    auto denom = nn::add(nn::sum(p), nn::sum(y));
    auto d = nn::div(nn::add_s(nn::mul_s(inter, S(2)), S(epsilon)), nn::add_s(denom, S(epsilon)));
    dice_sum = dice_sum ? nn::add(dice_sum, d) : d;
  }
  auto dice_loss = nn::add_s(nn::mul_s(dice_sum, S(-1.0 / static_cast<double>(C))), S(1));
  return nn::add(nn::mul_s(dice_loss, S(w_dice)), nn::mul_s(ce, S(w_ce)));
}

// Hard Dice of two label maps averaged over the requested classes; classes
// absent from both volumes are skipped so they do not dilute the mean.
inline double mean_dice(const Tensor<std::uint8_t>& pred, const Tensor<std::uint8_t>& truth,
                        const std::vector<index_t>& classes) {
  if (!same_shape(pred, truth)) throw std::invalid_argument("mean_dice: shape mismatch");
  if (classes.empty()) throw std::invalid_argument("mean_dice: empty class set");
  double total = 0;
  index_t counted = 0;
  for (index_t c : classes) {
    index_t inter = 0, np = 0, nt = 0;
    for (index_t i = 0; i < pred.numel(); ++i) {
      const bool p = pred[i] == c, t = truth[i] == c;
      inter += p && t;
      np += p;
      nt += t;
    }
    if (np + nt == 0) continue;
    total += 2.0 * static_cast<double>(inter) / static_cast<double>(np + nt);
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("mean_dice: no listed class present in either volume");
  return total / static_cast<double>(counted);
}

}  // namespace ulfe::seg
