#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>

#include "ulfe/metrics/diff.hpp"
#include "ulfe/nn/ops.hpp"

namespace ulfe::gan {

// Loss-term weights for cycle-consistent enhancement training. The paired term is
// phased in over epochs (see penalty_schedule) so the cycle objective shapes early
// training before the supervised signal dominates.
struct CycleLossWeights {
  double lambda_cycle_ulf = 10.0;
  double lambda_cycle_hf = 10.0;
  double lambda_adv = 1.0;
  double lambda_paired_max = 1.0;
  double tau = 20.0;  // epochs until the paired weight reaches half its maximum
};

inline void validate(const CycleLossWeights& w) {
  if (w.lambda_cycle_ulf < 0 || w.lambda_cycle_hf < 0 || w.lambda_adv < 0 ||
      w.lambda_paired_max < 0)
    throw std::invalid_argument("CycleLossWeights: weights must be nonnegative");
  if (!(w.tau > 0)) throw std::invalid_argument("CycleLossWeights: tau must be positive");
}

// Paired-penalty ramp: lambda(e) = lambda_paired_max * (2/pi) * atan(e / tau).
// Zero at epoch 0, half the maximum at epoch tau, monotonically approaching the cap.
inline double penalty_schedule(double epoch, double lambda_paired_max, double tau) {
  if (epoch < 0) throw std::invalid_argument("penalty_schedule: epoch must be nonnegative");
  if (!(tau > 0)) throw std::invalid_argument("penalty_schedule: tau must be positive");
  if (lambda_paired_max < 0)
    throw std::invalid_argument("penalty_schedule: lambda_paired_max must be nonnegative");
  return lambda_paired_max * (2.0 / 3.14159265358979323846) * std::atan(epoch / tau);
}

inline double penalty_schedule(double epoch, const CycleLossWeights& w) {
  return penalty_schedule(epoch, w.lambda_paired_max, w.tau);
}

// Reconstruction fidelity after a round trip through both generators: mean absolute
// difference, zero exactly when the cycle is an identity.
template <typename S>
nn::Var<S> cycle_loss(const nn::Var<S>& reconstructed, const nn::Var<S>& original) {
  if (reconstructed->value.shape() != original->value.shape())
    throw std::invalid_argument("cycle_loss: shape mismatch");
  return nn::mean(nn::abs(nn::sub(reconstructed, original)));
}

// Least-squares adversarial pair over patch score maps:
//   generator term  mean((D(fake) - 1)^2)   -- fake scores must stay attached to G
//   critic term     0.5 mean((D(real) - 1)^2) + 0.5 mean(D(fake)^2)
// No detachment happens here; pass scores from the graph the caller intends to
// optimize (detached fakes for the critic step, attached for the generator step).
template <typename S>
std::pair<nn::Var<S>, nn::Var<S>> adversarial_losses(const nn::Var<S>& d_real,
                                                     const nn::Var<S>& d_fake) {
  auto g = nn::mean(nn::square(nn::add_s(d_fake, S(-1))));
  auto d = nn::add(nn::mul_s(nn::mean(nn::square(nn::add_s(d_real, S(-1)))), S(0.5)),
                   nn::mul_s(nn::mean(nn::square(d_fake)), S(0.5)));
  return {std::move(g), std::move(d)};
}

// Negated challenge score against the paired reference:
//   -(0.7 SSIM + 0.1 PSNR_capped + 0.1 (1 - MAE) + 0.1 (1 - NMSE))
// Minimized at exactly -(0.9 + 0.1 * cap_db) when enhanced == reference.
template <typename S>
nn::Var<S> paired_challenge_loss(const nn::Var<S>& enhanced, const nn::Var<S>& reference,
                                 double psnr_cap_db = 50.0,
                                 const metrics::SsimParams& params = {}) {
  return nn::neg(metrics::weighted_score_var(enhanced, reference, psnr_cap_db, params));
}

}  // namespace ulfe::gan
